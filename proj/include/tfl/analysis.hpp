#pragma once

// Post-hoc diagnostics over hybrid arcs.

#include <optional>
#include <vector>

#include "json.hpp"
#include "tfl/fit.hpp"
#include "tfl/hybrid.hpp"

namespace tfl {

struct ErrorSample {
  double t = 0.0;
  int i = 0;
  double e = 0.0;
};

/// |z - calH_q(x, s, applied input)| at every recorded sample; jump instants
/// appear twice so the discontinuity is preserved. `tmpl` may be null for
/// sample-and-hold arcs. Empty for state-feedback arcs.
std::vector<ErrorSample> estimation_error(const HybridArc& arc, const SystemModel& sys, const ControlTemplate* tmpl);

struct ContainmentReport {
  bool contained = true;
  double max_inf_norm = 0.0;  // max |x|_inf along the arc
  double max_violation = 0.0; // max distance (inf-norm) outside the outer box, 0 if inside
  std::optional<double> escape_time;
};

ContainmentReport containment(const HybridArc& arc, const CompactSpec& spec);

/// V(x(t)) along the arc; empty when the model has no Lyapunov function.
std::vector<TimeValue> lyapunov_trace(const HybridArc& arc, const SystemModel& sys);

/// |x(t)| along the arc (jump duplicates removed).
std::vector<TimeValue> state_norm_series(const HybridArc& arc);

struct SummaryOptions {
  double x_window_start = 0.5;  // fraction of the arc where the nu_x window begins
  int e_window_periods = 5;     // nu_e window length in sampling periods
  double e_floor = 1e-10;       // nu_e window ends once e falls below e_floor * max e
};

struct ArcSummary {
  std::optional<DecayFit> x_fit;  // nullopt when undefined (zero arc or too few samples)
  std::optional<DecayFit> e_fit;
  ContainmentReport containment;
  int clamp_events = 0;
  long phi_failures = 0;
  bool escaped = false;
  double final_x_norm = 0.0;
  double initial_x_norm = 0.0;
};

ArcSummary summarize(const HybridArc& arc, const SystemModel& sys, const CompactSpec& spec,
                     const ControlTemplate* tmpl, const SummaryOptions& options = {});

/// {nu_x, nu_e, contained, clamp_events, phi_failures, fit_windows, ...}; undefined rates are null.
nlohmann::json to_json(const ArcSummary& summary);

struct DecayRun {
  double theta = 0.0;
  std::optional<DecayFit> fit;
  double peak_ratio = 0.0;  // max |e| / |e(0)|
};

struct ObserverDecayReport {
  std::vector<DecayRun> runs;
  bool rates_increasing = false;
  double peaking_slope = 0.0;  // least-squares slope of log(peak_ratio) against log(theta)
};

/// Observer error decay at frozen (mu, R): one flow of length `horizon` (no
/// jump) per theta, starting from `init`. The fit window runs from the error
/// peak until |e| falls below 1e-12 |e(0)|.
ObserverDecayReport observer_decay(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                                   int q, const std::vector<double>& gains, const std::vector<double>& thetas,
                                   const HybridState& init, double horizon, const IntegratorParams& integ);

}  // namespace tfl
