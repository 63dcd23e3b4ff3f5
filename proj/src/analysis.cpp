#include "tfl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tfl {

std::vector<ErrorSample> estimation_error(const HybridArc& arc, const SystemModel& sys, const ControlTemplate* tmpl) {
  std::vector<ErrorSample> out;
  if (arc.kind == LoopKind::StateFeedback) return out;
  if (arc.kind == LoopKind::Templated && !tmpl) throw std::invalid_argument("templated arc needs its template");
  for (const auto& seg : arc.segments) {
    for (const auto& a : seg.samples) {
      out.push_back({a.t, a.i, estimation_error_norm(sys, arc.kind, tmpl, arc.q, a.state)});
    }
  }
  return out;
}

ContainmentReport containment(const HybridArc& arc, const CompactSpec& spec) {
  ContainmentReport rep;
  const Box& box = spec.outer;
  for (const auto& seg : arc.segments) {
    for (const auto& a : seg.samples) {
      const Vector& x = a.state.x;
      rep.max_inf_norm = std::max(rep.max_inf_norm, x.lpNorm<Eigen::Infinity>());
      double violation = 0.0;
      for (int k = 0; k < x.size(); ++k) {
        violation = std::max({violation, box.lo[k] - x[k], x[k] - box.hi[k]});
      }
      if (violation > 0.0 && rep.contained) {
        rep.contained = false;
        rep.escape_time = a.t;
      }
      rep.max_violation = std::max(rep.max_violation, violation);
    }
  }
  if (arc.escaped) {
    rep.contained = false;
    if (!rep.escape_time) rep.escape_time = arc.escape_time;
  }
  return rep;
}

std::vector<TimeValue> lyapunov_trace(const HybridArc& arc, const SystemModel& sys) {
  std::vector<TimeValue> out;
  if (!sys.lyapunov) return out;
  for (const auto& a : arc.samples()) out.push_back({a.t, *sys.lyapunov_value(a.state.x)});
  return out;
}

std::vector<TimeValue> state_norm_series(const HybridArc& arc) {
  std::vector<TimeValue> out;
  for (const auto& seg : arc.segments) {
    for (const auto& a : seg.samples) {
      // x is continuous across jumps: keep the pre-jump copy only.
      if (!out.empty() && out.back().t == a.t) continue;
      out.push_back({a.t, a.state.x.norm()});
    }
  }
  return out;
}

namespace {

// A rate is undefined on identically-zero data or with too few samples.
std::optional<DecayFit> try_fit(const std::vector<TimeValue>& series, FitWindow window, double period) {
  double peak = 0.0;
  int count = 0;
  for (const auto& s : series) {
    if (s.t >= window.t0 && s.t <= window.t1) {
      peak = std::max(peak, s.value);
      ++count;
    }
  }
  if (count < 10 || !(peak > 0.0) || !std::isfinite(peak)) return std::nullopt;
  return fit_rate(series, window, period);
}

nlohmann::json fit_json(const std::optional<DecayFit>& fit) {
  if (!fit) return nullptr;
  return {{"C", fit->C}, {"nu", fit->nu}, {"r_squared", fit->r_squared}, {"points", fit->points},
          {"window", {fit->window.t0, fit->window.t1}}};
}

}  // namespace

ArcSummary summarize(const HybridArc& arc, const SystemModel& sys, const CompactSpec& spec,
                     const ControlTemplate* tmpl, const SummaryOptions& options) {
  ArcSummary out;
  out.containment = containment(arc, spec);
  out.clamp_events = arc.clamp_events;
  out.phi_failures = arc.phi_failures;
  out.escaped = arc.escaped;

  const auto xs = state_norm_series(arc);
  if (xs.empty()) return out;
  out.initial_x_norm = xs.front().value;
  out.final_x_norm = xs.back().value;
  const double t_end = xs.back().t;
  if (!arc.escaped) {
    out.x_fit = try_fit(xs, {options.x_window_start * t_end, t_end}, arc.delta);
  }

  if (arc.kind != LoopKind::StateFeedback && !arc.escaped) {
    std::vector<TimeValue> es;
    double e_max = 0.0;
    for (const auto& s : estimation_error(arc, sys, tmpl)) {
      es.push_back({s.t, s.e});
      if (std::isfinite(s.e)) e_max = std::max(e_max, s.e);
    }
    double t1 = std::min(t_end, options.e_window_periods * arc.delta);
    for (const auto& s : es) {
      if (s.t > 0.0 && s.value < options.e_floor * e_max) {
        t1 = std::min(t1, s.t);
        break;
      }
    }
    out.e_fit = try_fit(es, {0.0, t1}, arc.delta);
  }
  return out;
}

nlohmann::json to_json(const ArcSummary& s) {
  nlohmann::json j;
  j["nu_x"] = s.x_fit ? nlohmann::json(s.x_fit->nu) : nlohmann::json(nullptr);
  j["nu_e"] = s.e_fit ? nlohmann::json(s.e_fit->nu) : nlohmann::json(nullptr);
  j["contained"] = s.containment.contained;
  j["max_inf_norm"] = s.containment.max_inf_norm;
  j["escape_time"] = s.containment.escape_time ? nlohmann::json(*s.containment.escape_time) : nlohmann::json(nullptr);
  j["escaped"] = s.escaped;
  j["clamp_events"] = s.clamp_events;
  j["phi_failures"] = s.phi_failures;
  j["initial_x_norm"] = s.initial_x_norm;
  j["final_x_norm"] = s.final_x_norm;
  j["fit_windows"] = {{"x", fit_json(s.x_fit)}, {"e", fit_json(s.e_fit)}};
  return j;
}

ObserverDecayReport observer_decay(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& tmpl,
                                   int q, const std::vector<double>& gains, const std::vector<double>& thetas,
                                   const HybridState& init, double horizon, const IntegratorParams& integ) {
  if (thetas.empty()) throw std::invalid_argument("observer_decay needs at least one theta");
  ObserverDecayReport rep;
  for (double theta : thetas) {
    ObserverConfig cfg{q, gains, theta, horizon};
    HybridState st = init;
    st.s = 0.0;
    const HybridArc arc = simulate(sys, spec, tmpl, cfg, st, horizon, integ);
    const auto err = estimation_error(arc, sys, &tmpl);

    DecayRun run;
    run.theta = theta;
    const double e0 = err.front().e;
    std::size_t peak = 0;
    for (std::size_t k = 0; k < err.size(); ++k) {
      if (err[k].e > err[peak].e) peak = k;
    }
    run.peak_ratio = e0 > 0.0 ? err[peak].e / e0 : 0.0;
    double t1 = err.back().t;
    for (std::size_t k = peak; k < err.size(); ++k) {
      if (err[k].e < 1e-12 * e0) {
        t1 = err[k].t;
        break;
      }
    }
    std::vector<TimeValue> series;
    for (const auto& s : err) series.push_back({s.t, s.e});
    run.fit = try_fit(series, {err[peak].t, t1}, 0.0);
    rep.runs.push_back(run);
  }

  rep.rates_increasing = true;
  for (std::size_t k = 0; k < rep.runs.size(); ++k) {
    if (!rep.runs[k].fit) rep.rates_increasing = false;
    if (k > 0 && rep.runs[k].fit && rep.runs[k - 1].fit && !(rep.runs[k].fit->nu > rep.runs[k - 1].fit->nu)) {
      rep.rates_increasing = false;
    }
  }

  if (rep.runs.size() >= 2) {
    double sx = 0, sy = 0;
    const double n = static_cast<double>(rep.runs.size());
    for (const auto& r : rep.runs) {
      sx += std::log(r.theta);
      sy += std::log(std::max(r.peak_ratio, 1e-300));
    }
    double sxx = 0, sxy = 0;
    for (const auto& r : rep.runs) {
      const double dx = std::log(r.theta) - sx / n;
      sxx += dx * dx;
      sxy += dx * (std::log(std::max(r.peak_ratio, 1e-300)) - sy / n);
    }
    rep.peaking_slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  return rep;
}

}  // namespace tfl
