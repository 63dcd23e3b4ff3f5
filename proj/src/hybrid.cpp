#include "tfl/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "tfl/errors.hpp"
#include "tfl/format.hpp"

namespace tfl {

const char* to_string(LoopKind kind) {
  switch (kind) {
    case LoopKind::Templated: return "templated";
    case LoopKind::SampleHold: return "sample_hold";
    case LoopKind::StateFeedback: return "state_feedback";
  }
  return "?";
}

HybridState HybridState::zero(const SystemModel& sys, int q, double s0, bool with_observer, bool with_held) {
  HybridState st;
  st.x = Vector::Zero(sys.n);
  if (with_observer) st.z = Vector::Zero(sys.m * (q + 1));
  st.s = s0;
  st.mu = 0.0;
  st.R = Matrix::Identity(sys.p, sys.p);
  if (with_held) st.held = Vector::Zero(sys.p);
  return st;
}

std::vector<ArcSample> HybridArc::samples() const {
  std::vector<ArcSample> out;
  for (const auto& seg : segments) out.insert(out.end(), seg.samples.begin(), seg.samples.end());
  return out;
}

InputJet applied_input_jet(LoopKind kind, const ControlTemplate* tmpl, const HybridState& state, double s, int order) {
  if (kind == LoopKind::SampleHold) return scaled_input_jet(ConstantSignal(state.held), s, 1.0, Matrix::Identity(state.held.size(), state.held.size()), order);
  return scaled_input_jet(*tmpl, s, state.mu, state.R, order);
}

double estimation_error_norm(const SystemModel& sys, LoopKind kind, const ControlTemplate* tmpl, int q,
                             const HybridState& state) {
  if (kind == LoopKind::StateFeedback || state.z.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const InputJet sigma = applied_input_jet(kind, tmpl, state, state.s, std::max(q - 1, 0));
  try {
    return (state.z - calH(sys, state.x, sigma, q).values).norm();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// ---------------------------------------------------------------------------
// Jump maps
// ---------------------------------------------------------------------------
namespace {

struct ClampedInput {
  Vector u;
  double norm;
  bool clamped;
};

ClampedInput clamp_input(const Vector& u, double mu_max) {
  const double n = u.norm();
  if (n > mu_max) return {u * (mu_max / n), mu_max, true};
  return {u, n, false};
}

Matrix next_rotation(const HybridState& state, const Vector& u_new) {
  const Vector u_prev = state.mu * state.R.col(0);
  return reorthonormalize(isometry_update(u_prev, state.R, u_new));
}

}  // namespace

JumpResult jump_map(const HybridState& state, const SystemModel& sys, const SatMap& sat, const ControlTemplate& tmpl,
                    const ObserverConfig& cfg, double mu_max, const Vector& warm_start) {
  JumpResult out;
  const int q = cfg.q;
  const InputJet sigma = scaled_input_jet(tmpl, state.s, state.mu, state.R, std::max(q - 1, 0));
  out.phi = phi_invert(sys, state.z, sigma, q, sat, warm_start);
  out.x_hat = sat(out.phi.x_hat);
  const Vector lam = sys.feedback(out.x_hat);
  const double lam_norm = lam.norm();
  out.clamped = lam_norm > mu_max;

  HybridState& post = out.post;
  post.x = state.x;
  post.s = 0.0;
  post.mu = std::min(lam_norm, mu_max);
  post.R = next_rotation(state, lam);
  post.z = calH(sys, out.x_hat, 0.0, tmpl, post.mu, post.R, q).values;
  return out;
}

JumpResult jump_map_sample_hold(const HybridState& state, const SystemModel& sys, const SatMap& sat,
                                const ObserverConfig& cfg, double mu_max, const Vector& warm_start) {
  JumpResult out;
  const int q = cfg.q;
  const InputJet sigma = InputJet{ConstantSignal(state.held).derivatives(0.0, std::max(q - 1, 0))};
  out.phi = phi_invert(sys, state.z, sigma, q, sat, warm_start);
  out.x_hat = sat(out.phi.x_hat);
  const ClampedInput v = clamp_input(sys.feedback(out.x_hat), mu_max);
  out.clamped = v.clamped;

  HybridState& post = out.post;
  post.x = state.x;
  post.s = 0.0;
  post.held = v.u;
  post.mu = v.norm;
  post.R = next_rotation(state, v.u);
  post.z = calH(sys, out.x_hat, InputJet{ConstantSignal(v.u).derivatives(0.0, std::max(q - 1, 0))}, q).values;
  return out;
}

JumpResult jump_map_state_feedback(const HybridState& state, const SystemModel& sys, const SatMap& sat,
                                   double mu_max) {
  JumpResult out;
  out.phi.converged = true;
  out.x_hat = sat(state.x);
  out.phi.x_hat = out.x_hat;
  const Vector lam = sys.feedback(out.x_hat);
  const double lam_norm = lam.norm();
  out.clamped = lam_norm > mu_max;
  HybridState& post = out.post;
  post.x = state.x;
  post.s = 0.0;
  post.mu = std::min(lam_norm, mu_max);
  post.R = next_rotation(state, lam);
  return out;
}

// ---------------------------------------------------------------------------
// Simulation engine
// ---------------------------------------------------------------------------
namespace {

struct Engine {
  LoopKind kind;
  const SystemModel& sys;
  const CompactSpec& spec;
  const ControlTemplate* tmpl;
  int q;
  double delta;
  IntegratorParams integ;
  double mu_max;
  SatMap sat;
  std::optional<HighGainObserver> observer;

  bool has_observer() const { return kind != LoopKind::StateFeedback; }

  // Derivative of the stacked (x, z) at timer value s with (mu, R, held) frozen.
  Vector rhs(const HybridState& frozen, const Vector& y, double s) {
    const int n = sys.n;
    const InputJet sigma = applied_input_jet(kind, tmpl, frozen, s, has_observer() ? q : 0);
    Vector dy(y.size());
    const Vector x = y.head(n);
    dy.head(n) = sys.flow(x, sigma.d.col(0));
    if (has_observer()) {
      const Vector z = y.tail(y.size() - n);
      dy.tail(y.size() - n) = observer->rhs(sys.output(x), z, sigma);
    }
    return dy;
  }

  ArcSample sample(double t, int i, const HybridState& st) const {
    ArcSample a;
    a.t = t;
    a.i = i;
    a.state = st;
    a.e_norm = estimation_error_norm(sys, kind, tmpl, q, st);
    a.phi_converged = has_observer() ? observer->last_converged() : true;
    return a;
  }

  JumpResult jump(const HybridState& st) {
    switch (kind) {
      case LoopKind::Templated: {
        JumpResult r = jump_map(st, sys, sat, *tmpl, observer->config(), mu_max, observer->warm_start());
        observer->set_warm_start(r.phi.x_hat);
        return r;
      }
      case LoopKind::SampleHold: {
        JumpResult r = jump_map_sample_hold(st, sys, sat, observer->config(), mu_max, observer->warm_start());
        observer->set_warm_start(r.phi.x_hat);
        return r;
      }
      case LoopKind::StateFeedback: return jump_map_state_feedback(st, sys, sat, mu_max);
    }
    throw std::logic_error("unreachable");
  }

  HybridArc run(const HybridState& init, double t_end) {
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (!(integ.step > 0.0) || integ.stride < 1) throw std::invalid_argument("bad integrator parameters");
    if (init.s < 0.0 || init.s > delta) throw std::invalid_argument("initial timer outside [0, delta]");
    if (init.x.size() != sys.n || init.R.rows() != sys.p || init.R.cols() != sys.p) {
      throw std::invalid_argument("initial state has wrong dimensions");
    }
    if (has_observer() && init.z.size() != sys.m * (q + 1)) {
      throw std::invalid_argument("initial observer state has wrong dimension");
    }
    if (kind == LoopKind::SampleHold && init.held.size() != sys.p) {
      throw std::invalid_argument("sample-and-hold needs an initial held input");
    }

    HybridArc arc;
    arc.kind = kind;
    arc.n = sys.n;
    arc.m = sys.m;
    arc.p = sys.p;
    arc.q = has_observer() ? q : 0;
    arc.delta = delta;
    arc.s0 = init.s;

    HybridState st = init;
    const int n = sys.n;
    double t = 0.0;
    for (int i = 0;; ++i) {
      FlowSegment seg;
      seg.index = i;
      seg.t_begin = t;
      const double tau = (delta - init.s) + i * delta;
      const bool lands_on_jump = tau <= t_end;
      const double t_stop = lands_on_jump ? tau : t_end;
      const double s_begin = st.s;
      const double s_end = lands_on_jump ? delta : s_begin + (t_stop - seg.t_begin);
      const double length = t_stop - seg.t_begin;
      const int steps = length > 0.0 ? static_cast<int>(std::ceil(length / integ.step - 1e-9)) : 0;

      seg.samples.push_back(sample(t, i, st));
      Vector y(n + st.z.size());
      y.head(n) = st.x;
      if (has_observer()) y.tail(st.z.size()) = st.z;

      double s = s_begin;
      for (int k = 1; k <= steps; ++k) {
        const double s_next = k == steps ? s_end : s_begin + k * integ.step;
        const double h = s_next - s;
        const Vector k1 = rhs(st, y, s);
        const Vector k2 = rhs(st, y + 0.5 * h * k1, s + 0.5 * h);
        const Vector k3 = rhs(st, y + 0.5 * h * k2, s + 0.5 * h);
        const Vector k4 = rhs(st, y + h * k3, s_next);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = s_next;
        st.s = s;
        st.x = y.head(n);
        if (has_observer()) st.z = y.tail(st.z.size());
        t = k == steps ? t_stop : seg.t_begin + (s - s_begin);
        if (!y.allFinite()) {
          arc.escaped = true;
          arc.escape_time = t;
          break;
        }
        if (k % integ.stride == 0 || k == steps) seg.samples.push_back(sample(t, i, st));
      }
      seg.t_end = seg.samples.back().t;
      arc.segments.push_back(std::move(seg));
      if (arc.escaped || !lands_on_jump || tau == t_end) break;

      JumpRecord rec;
      rec.t = tau;
      rec.index = i;
      rec.pre = st;
      JumpResult jr = jump(st);
      if (jr.clamped) ++arc.clamp_events;
      rec.post = jr.post;
      rec.x_hat = jr.x_hat;
      rec.phi_converged = jr.phi.converged;
      rec.clamped = jr.clamped;
      st = jr.post;
      t = tau;
      arc.jumps.push_back(std::move(rec));
      if (!st.x.allFinite() || !st.z.allFinite()) {
        arc.escaped = true;
        arc.escape_time = t;
        break;
      }
    }
    const auto jump_failures =
        std::count_if(arc.jumps.begin(), arc.jumps.end(), [](const JumpRecord& r) { return !r.phi_converged; });
    arc.phi_failures = (has_observer() ? observer->failures() : 0) + static_cast<long>(jump_failures);
    return arc;
  }
};

Engine make_engine(LoopKind kind, const SystemModel& sys, const CompactSpec& spec, const ControlTemplate* tmpl, int q,
                   double delta, const IntegratorParams& integ, const LoopOptions& options) {
  Engine e{kind, sys, spec, tmpl, q, delta, integ, spec.lambda_bar * (1.0 + options.mu_margin),
           SatMap::for_box(spec.outer), std::nullopt};
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (tmpl && delta > tmpl->horizon()) throw std::invalid_argument("delta exceeds the template horizon");
  return e;
}

}  // namespace

HybridArc simulate(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                   const ObserverConfig& cfg, const HybridState& init, double t_end, const IntegratorParams& integ,
                   const LoopOptions& options) {
  Engine e = make_engine(LoopKind::Templated, sys, spec, &tmpl, cfg.q, cfg.delta, integ, options);
  e.observer.emplace(sys, cfg, e.sat, options.warm_start.value_or(spec.inner.center()));
  return e.run(init, t_end);
}

HybridArc simulate_sample_hold(const SystemModel& sys, const CompactSpec& spec, const ObserverConfig& cfg,
                               const HybridState& init, double t_end, const IntegratorParams& integ,
                               const LoopOptions& options) {
  Engine e = make_engine(LoopKind::SampleHold, sys, spec, nullptr, cfg.q, cfg.delta, integ, options);
  e.observer.emplace(sys, cfg, e.sat, options.warm_start.value_or(spec.inner.center()));
  return e.run(init, t_end);
}

HybridArc simulate_state_feedback(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                                  double delta, const HybridState& init, double t_end, const IntegratorParams& integ,
                                  const LoopOptions& options) {
  Engine e = make_engine(LoopKind::StateFeedback, sys, spec, &tmpl, 0, delta, integ, options);
  return e.run(init, t_end);
}

void write_arc_csv(const HybridArc& arc, std::ostream& os) {
  os << "t,i";
  for (int k = 1; k <= arc.n; ++k) os << ",x_" << k;
  const int nz = arc.kind == LoopKind::StateFeedback ? 0 : arc.m * (arc.q + 1);
  for (int k = 0; k < nz; ++k) os << ",z_" << k;
  os << ",s,mu";
  for (int r = 1; r <= arc.p; ++r) {
    for (int c = 1; c <= arc.p; ++c) os << ",R_" << r << "_" << c;
  }
  os << ",e_norm,phi_converged\n";
  for (const auto& seg : arc.segments) {
    for (const auto& a : seg.samples) {
      os << format_double(a.t) << ',' << a.i;
      for (int k = 0; k < arc.n; ++k) os << ',' << format_double(a.state.x[k]);
      for (int k = 0; k < nz; ++k) os << ',' << format_double(a.state.z[k]);
      os << ',' << format_double(a.state.s) << ',' << format_double(a.state.mu);
      for (int r = 0; r < arc.p; ++r) {
        for (int c = 0; c < arc.p; ++c) os << ',' << format_double(a.state.R(r, c));
      }
      os << ',' << format_double(a.e_norm) << ',' << (a.phi_converged ? 1 : 0) << '\n';
    }
  }
}

}  // namespace tfl
