#pragma once

// Hybrid closed loops with a periodic timer s in [0, delta]:
//
//   templated output feedback   u = mu R v*(s), high-gain observer z, jumps
//                               refresh (mu, R) from lambda(sat(phi(z))) and
//                               re-initialize z on the new input;
//   sample-and-hold             u = v held between jumps, v+ = lambda(sat(phi(z)));
//   templated state feedback    as the first loop with the true state in place
//                               of the estimate and no observer.
//
// Flows use fixed-step RK4 whose last substep lands exactly on s = delta; the
// timer is advanced analytically, so jump times are tau_i = delta - s0 + i delta.

#include <iosfwd>
#include <optional>
#include <vector>

#include "tfl/observer.hpp"
#include "tfl/system.hpp"
#include "tfl/template.hpp"

namespace tfl {

enum class LoopKind { Templated, SampleHold, StateFeedback };

const char* to_string(LoopKind kind);

struct HybridState {
  Vector x;
  Vector z;      // empty for state feedback
  double s = 0.0;
  double mu = 0.0;
  Matrix R;      // p x p orthogonal
  Vector held;   // sample-and-hold input; empty otherwise

  /// Equilibrium state with s = s0, mu = 0, R = I (held = 0 when requested).
  static HybridState zero(const SystemModel& sys, int q, double s0, bool with_observer, bool with_held = false);
};

struct IntegratorParams {
  double step = 1e-3;
  int stride = 1;  // record every stride-th step (segment ends are always recorded)
};

struct LoopOptions {
  double mu_margin = 0.1;           // mu_max = lambda_bar (1 + mu_margin)
  std::optional<Vector> warm_start; // initial phi warm start; default: center of the inner box
};

struct ArcSample {
  double t = 0.0;
  int i = 0;
  HybridState state;
  double e_norm = 0.0;  // NaN when there is no observer
  bool phi_converged = true;
};

struct FlowSegment {
  int index = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<ArcSample> samples;
};

struct JumpRecord {
  double t = 0.0;
  int index = 0;  // hybrid index before the jump
  HybridState pre;
  HybridState post;
  Vector x_hat;   // saturated estimate (true state for state feedback)
  bool phi_converged = true;
  bool clamped = false;
};

struct HybridArc {
  LoopKind kind = LoopKind::Templated;
  int n = 0, m = 0, p = 0, q = 0;
  double delta = 0.0;
  double s0 = 0.0;
  std::vector<FlowSegment> segments;
  std::vector<JumpRecord> jumps;
  long phi_failures = 0;
  int clamp_events = 0;
  bool escaped = false;  // non-finite state encountered; arc truncated
  std::optional<double> escape_time;

  /// All samples in hybrid-time order; jump instants appear twice, as (tau, i) and (tau, i+1).
  std::vector<ArcSample> samples() const;
  const HybridState& final_state() const { return segments.back().samples.back().state; }
  double final_time() const { return segments.back().samples.back().t; }
};

struct JumpResult {
  HybridState post;
  Vector x_hat;
  PhiResult phi;
  bool clamped = false;
};

/// Jump of the templated output feedback at s = delta.
JumpResult jump_map(const HybridState& state, const SystemModel& sys, const SatMap& sat, const ControlTemplate& tmpl,
                    const ObserverConfig& cfg, double mu_max, const Vector& warm_start);

/// Jump of the sample-and-hold loop.
JumpResult jump_map_sample_hold(const HybridState& state, const SystemModel& sys, const SatMap& sat,
                                const ObserverConfig& cfg, double mu_max, const Vector& warm_start);

/// Jump of the templated state feedback.
JumpResult jump_map_state_feedback(const HybridState& state, const SystemModel& sys, const SatMap& sat,
                                   double mu_max);

HybridArc simulate(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                   const ObserverConfig& cfg, const HybridState& init, double t_end, const IntegratorParams& integ,
                   const LoopOptions& options = {});

/// `init.held` is the input applied on the first interval.
HybridArc simulate_sample_hold(const SystemModel& sys, const CompactSpec& spec, const ObserverConfig& cfg,
                               const HybridState& init, double t_end, const IntegratorParams& integ,
                               const LoopOptions& options = {});

HybridArc simulate_state_feedback(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                                  double delta, const HybridState& init, double t_end, const IntegratorParams& integ,
                                  const LoopOptions& options = {});

/// Input jet applied by `kind` in `state` at timer value s.
InputJet applied_input_jet(LoopKind kind, const ControlTemplate* tmpl, const HybridState& state, double s, int order);

/// |z - calH_q(x, s, applied input)|; NaN for state feedback.
double estimation_error_norm(const SystemModel& sys, LoopKind kind, const ControlTemplate* tmpl, int q,
                             const HybridState& state);

/// Arc CSV: t,i,x_1..x_n,z_0..,s,mu,R_1_1..R_p_p,e_norm,phi_converged.
void write_arc_csv(const HybridArc& arc, std::ostream& os);

}  // namespace tfl
