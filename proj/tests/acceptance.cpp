// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// limits are fixed here; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "tfl/analysis.hpp"
#include "tfl/cli.hpp"
#include "tfl/config.hpp"
#include "tfl/observer.hpp"
#include "tfl/template.hpp"

using namespace tfl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds
  std::function<Outcome()> body;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Vector uniform_in(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vector x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x[i] = b.lo[i] + U(rng) * (b.hi[i] - b.lo[i]);
  return x;
}

struct Bench {
  BuiltinInstance inst;
  ControlTemplate tmpl;
  ObserverConfig cfg;
};

Bench bench(const std::string& name) {
  auto inst = builtin_system(name);
  ControlTemplate tmpl(inst.horizon, inst.template_coeffs);
  ObserverConfig cfg{inst.q, hurwitz_gains(inst.q), inst.theta, inst.delta};
  return {std::move(inst), std::move(tmpl), std::move(cfg)};
}

// 1. hk against Richardson differences of the integrated output.
Outcome jet_correctness() {
  constexpr double kRelTol = 1e-5;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto names = builtin_names();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = builtin_system(names[trial % names.size()]);
    oracle::PolyInput u{Matrix(1, 5)};
    for (int j = 0; j < 5; ++j) u.c(0, j) = U(rng);
    const Vector x = uniform_in(inst.spec.inner, rng);
    const InputJet sigma{u.derivatives_at_zero(4)};
    for (int k = 0; k <= 4; ++k) {
      const double exact = hk(inst.system, x, sigma, k)[0];
      const double fd = oracle::richardson_derivative(
          [&](double t) { return oracle::integrate_output(inst.system, u, x, t, 2.5e-4); }, k, 0.1)[0];
      worst = std::max(worst, std::abs(exact - fd) / std::max(std::abs(exact), 1.0));
    }
  }
  return {worst <= kRelTol, "150 hk values over 50 triples, worst rel err " + fmt("%.2e", worst)};
}

// 2. calH and its Jacobian against closed forms on linear2d.
Outcome linear_oracle() {
  constexpr double kTol = 1e-10;
  const auto inst = builtin_system("linear2d");
  Matrix A(2, 2), B(2, 1), C(1, 2);
  A << 0, 1, -1, 0;
  B << 0, 1;
  C << 1, 0;
  const ControlTemplate v(inst.horizon, inst.template_coeffs);
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = uniform_in(inst.spec.outer, rng);
    const double t = U(rng) * v.horizon(), mu = U(rng) * inst.spec.lambda_bar;
    const Matrix R = Matrix::Constant(1, 1, U(rng) < 0.5 ? -1.0 : 1.0);
    for (int q = 0; q <= 5; ++q) {
      const auto stack = calH(inst.system, x, t, v, mu, R, q);
      const Matrix Ud = R * (mu * v.derivatives(t, q));
      for (int j = 0; j <= q; ++j) {
        worst = std::max(worst, std::abs(stack.values[j] - oracle::linear_output_derivative(A, B, C, x, Ud, j)[0]));
      }
      const Matrix J = calH_jacobian(inst.system, x, t, v, mu, R, q);
      worst = std::max(worst, (J - oracle::linear_observability(A, C, q)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= kTol, "600 stacks, worst abs err " + fmt("%.2e", worst)};
}

// 3. | |a| R_a - |b| R_b |_op <= |a - b| for the isometry selection.
Outcome isometry_bound() {
  constexpr double kSlack = 1e-10;
  std::mt19937_64 rng(103);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> kind(0, 5);
  double worst = -1e300;
  int cases = 0;
  for (int p : {1, 2, 3, 5}) {
    for (int k = 0; k < 1000; ++k) {
      Vector a(p), b(p);
      for (int i = 0; i < p; ++i) {
        a[i] = g(rng);
        b[i] = g(rng);
      }
      switch (kind(rng)) {
        case 0: b = a * std::exp(g(rng)); break;
        case 1: b = -a * std::exp(g(rng)); break;
        case 2: b.setZero(); break;
        case 3: a.setZero(); break;
        default: break;
      }
      const Matrix Ra = isometry_from(a);
      const Matrix Rb = reorthonormalize(isometry_update(a, Ra, b));
      const double excess = oracle::op_norm(a.norm() * Ra - b.norm() * Rb) - (a - b).norm();
      worst = std::max(worst, excess);
      ++cases;
    }
  }
  return {worst <= kSlack, std::to_string(cases) + " pairs, max excess " + fmt("%.2e", worst)};
}

// 4. phi round trip and non-range behavior.
Outcome phi_round_trip() {
  constexpr double kTol = 1e-6;
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  int failures = 0, outside = 0, nonrange = 0;
  for (const auto& name : builtin_names()) {
    const Bench b = bench(name);
    const auto& sys = b.inst.system;
    const SatMap sat = SatMap::for_box(b.inst.spec.outer);
    for (int k = 0; k < 200; ++k) {
      const Vector x0 = uniform_in(b.inst.spec.inner, rng);
      const double t = U(rng) * b.tmpl.horizon(), mu = U(rng) * b.inst.spec.lambda_bar;
      const Matrix R = Matrix::Constant(1, 1, U(rng) < 0.5 ? -1.0 : 1.0);
      const InputJet sigma = scaled_input_jet(b.tmpl, t, mu, R, std::max(b.cfg.q - 1, 0));
      const Vector z = calH(sys, x0, sigma, b.cfg.q).values;
      const PhiResult r = phi_invert(sys, z, sigma, b.cfg.q, sat, b.inst.spec.inner.center());
      if (!r.converged) ++failures;
      worst = std::max(worst, (r.x_hat - x0).norm());
    }
    // Stacks far from the image of the outer box.
    for (int k = 0; k < 50; ++k) {
      const double t = U(rng) * b.tmpl.horizon(), mu = U(rng) * b.inst.spec.lambda_bar;
      const InputJet sigma = scaled_input_jet(b.tmpl, t, mu, Matrix::Identity(1, 1), std::max(b.cfg.q - 1, 0));
      Vector z(sys.m * (b.cfg.q + 1));
      for (int i = 0; i < z.size(); ++i) z[i] = 100.0 * g(rng);
      const PhiResult r = phi_invert(sys, z, sigma, b.cfg.q, sat, b.inst.spec.inner.center());
      if (r.residual > 1.0) ++nonrange;  // confirmed off the image
      if (!r.converged) ++failures;
      if (r.x_hat.norm() > sat.bound() * (1.0 + 1e-12)) ++outside;
    }
  }
  const bool ok = worst <= kTol && failures == 0 && outside == 0 && nonrange > 100;
  return {ok, "600 range points, worst err " + fmt("%.2e", worst) + "; " + std::to_string(nonrange) +
                  "/150 random stacks off the image; unconverged " + std::to_string(failures) + ", outside ball " +
                  std::to_string(outside)};
}

// 5. Observer error decay against the gain.
Outcome observer_decay_shape() {
  const Bench b = bench("bilinear2d");
  const auto cert = certify_template(b.inst.system, b.inst.spec, b.tmpl, b.cfg.q, GridParams{});
  HybridState init = HybridState::zero(b.inst.system, b.cfg.q, 0.0, true);
  init.x << 0.5, -0.5;
  init.mu = 1.0;
  const double th = b.inst.theta;
  const auto rep = observer_decay(b.inst.system, b.inst.spec, b.tmpl, b.cfg.q, b.cfg.gains, {th, 2 * th, 4 * th},
                                  init, b.inst.horizon, {1e-4, 1});
  std::string rates;
  bool fits = true;
  for (const auto& r : rep.runs) {
    fits = fits && r.fit.has_value();
    rates += (rates.empty() ? "" : "/") + (r.fit ? fmt("%.3g", r.fit->nu) : std::string("undefined"));
  }
  const double slope_limit = b.cfg.q + 0.5;
  const bool ok = cert.passed && fits && rep.rates_increasing && rep.peaking_slope <= slope_limit;
  return {ok, "template certified " + std::string(cert.passed ? "yes" : "no") + ", nu_e " + rates +
                  ", peaking slope " + fmt("%.3f", rep.peaking_slope) + " (limit " + fmt("%.1f", slope_limit) + ")"};
}

// 6. Constant template versus sample-and-hold.
Outcome sample_hold_reduction() {
  constexpr double kTol = 1e-7;
  double worst = 0.0;
  bool aligned = true;
  for (const auto& name : builtin_names()) {
    const Bench b = bench(name);
    const auto& sys = b.inst.system;
    const ControlTemplate constant = ControlTemplate::constant(sys.p, b.inst.horizon);
    HybridState a = HybridState::zero(sys, b.cfg.q, 0.0, true);
    a.x << 0.8, -0.6;
    a.mu = 0.25;
    HybridState h = a;
    h.held = a.mu * a.R.col(0);
    const IntegratorParams integ{1e-3, 5};
    const auto ta = simulate(sys, b.inst.spec, constant, b.cfg, a, 5.0, integ);
    const auto tb = simulate_sample_hold(sys, b.inst.spec, b.cfg, h, 5.0, integ);
    const auto sa = ta.samples(), sb = tb.samples();
    if (sa.size() != sb.size()) {
      aligned = false;
      continue;
    }
    for (std::size_t k = 0; k < sa.size(); ++k) {
      aligned = aligned && sa[k].t == sb[k].t && sa[k].i == sb[k].i;
      worst = std::max(worst, (sa[k].state.x - sb[k].state.x).cwiseAbs().maxCoeff());
      worst = std::max(worst, (sa[k].state.z - sb[k].state.z).cwiseAbs().maxCoeff());
      const Vector u = sa[k].state.mu * sa[k].state.R * constant.value(0.0);
      worst = std::max(worst, (u - sb[k].state.held).cwiseAbs().maxCoeff());
    }
  }
  return {aligned && worst <= kTol, "3 benchmarks over 5 s, worst samplewise diff " + fmt("%.2e", worst)};
}

std::vector<Vector> grid_initial_conditions() {
  std::vector<Vector> out;
  for (double a : {-1.0, -0.1, 1.0}) {
    for (double b : {-1.0, -0.1, 1.0}) {
      Vector x(2);
      x << a, b;
      out.push_back(x);
    }
  }
  return out;
}

// 7. Closed-loop stabilization from a grid of initial states.
Outcome closed_loop_stabilization() {
  const Bench b = bench("bilinear2d");
  const auto& sys = b.inst.system;
  int good = 0;
  double min_nu = 1e300, worst_ratio = 0.0;
  bool contained = true;
  for (const auto& x0 : grid_initial_conditions()) {
    HybridState init = HybridState::zero(sys, b.cfg.q, 0.0, true);
    init.x = x0;
    const auto arc = simulate(sys, b.inst.spec, b.tmpl, b.cfg, init, 10.0, {1e-3, 10});
    const auto s = summarize(arc, sys, b.inst.spec, &b.tmpl);
    const double ratio = s.final_x_norm / s.initial_x_norm;
    const double nu = s.x_fit ? s.x_fit->nu : -1.0;
    min_nu = std::min(min_nu, nu);
    worst_ratio = std::max(worst_ratio, ratio);
    contained = contained && s.containment.contained && !arc.escaped;
    if (nu > 0.0 && s.containment.contained && !arc.escaped && ratio < 1e-3) ++good;
  }
  return {good == 9, std::to_string(good) + "/9 initial states; min nu_x " + fmt("%.3f", min_nu) +
                         ", max final/initial " + fmt("%.2e", worst_ratio) + ", contained " +
                         (contained ? "yes" : "no")};
}

// 8. Templated state feedback.
Outcome state_feedback() {
  const Bench b = bench("bilinear2d");
  const auto& sys = b.inst.system;
  int good = 0;
  double min_nu = 1e300;
  for (const auto& x0 : grid_initial_conditions()) {
    HybridState init = HybridState::zero(sys, 0, 0.0, false);
    init.x = x0;
    const auto arc = simulate_state_feedback(sys, b.inst.spec, b.tmpl, b.inst.delta, init, 10.0, {1e-3, 10});
    const auto s = summarize(arc, sys, b.inst.spec, &b.tmpl);
    const double nu = s.x_fit ? s.x_fit->nu : -1.0;
    min_nu = std::min(min_nu, nu);
    if (nu > 0.0 && s.containment.contained) ++good;
  }
  return {good == 9, std::to_string(good) + "/9 initial states at delta " + fmt("%g", b.inst.delta) +
                         "; min nu_x " + fmt("%.3f", min_nu)};
}

// 9. Certification separates good and bad templates; search repairs the bad one.
Outcome certification_discriminates() {
  const RunConfig null_cfg = load_config("tests/fixtures/linear2d_null.cfg");
  const auto null_rep =
      certify_template(null_cfg.system, null_cfg.spec, null_cfg.make_template(), null_cfg.q, null_cfg.grid);
  const RunConfig bad_cfg = load_config("tests/fixtures/unobservable_bad.cfg");
  const auto bad_rep = certify_template(bad_cfg.system, bad_cfg.spec, bad_cfg.make_template(), bad_cfg.q, bad_cfg.grid);
  const RunConfig search_cfg = load_config("tests/fixtures/unobservable_search.cfg");
  const auto found = search_template(search_cfg.system, search_cfg.spec, search_cfg.make_template(), search_cfg.q,
                                     search_cfg.grid, search_cfg.search);
  const int degree = found.tmpl.degree();
  const bool ok = null_rep.passed && !bad_rep.passed && !bad_rep.witnesses.empty() && found.found &&
                  found.report.passed && degree == 2 && found.attempt < search_cfg.search.attempts;
  return {ok, std::string("null input ") + (null_rep.passed ? "passes" : "fails") + "; bad constant " +
                  (bad_rep.passed ? "passes" : "fails") + " with " + std::to_string(bad_rep.witnesses.size()) +
                  " witness(es); search " + (found.found ? "found" : "did not find") + " degree " +
                  std::to_string(degree) + " at attempt " + std::to_string(found.attempt)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Byte-identical outputs for identical config and seed.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "tfl_acceptance";
  fs::remove_all(root);
  std::ostringstream log;
  bool ok = true;
  int files = 0;
  const std::pair<std::string, std::string> runs[] = {{"simulate", "tests/fixtures/bilinear2d_nominal.cfg"},
                                                      {"sweep", "tests/fixtures/bilinear2d_sweep.cfg"}};
  for (const auto& [cmd, cfg] : runs) {
    for (const char* tag : {"a", "b"}) {
      const int code = run_command({cmd, cfg, (root / cmd / tag).string(), 7, std::nullopt}, log);
      ok = ok && code == kExitOk;
    }
    for (const auto& entry : fs::directory_iterator(root / cmd / "a")) {
      const fs::path other = root / cmd / "b" / entry.path().filename();
      ok = ok && fs::exists(other) && slurp(entry.path()) == slurp(other);
      ++files;
    }
  }
  fs::remove_all(root);
  return {ok && files == 3, std::to_string(files) + " output files compared across two runs"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "jet correctness", 10.0, jet_correctness},
      {2, "linear oracle", 1.0, linear_oracle},
      {3, "isometry selection bound", 5.0, isometry_bound},
      {4, "phi round trip", 30.0, phi_round_trip},
      {5, "observer decay shape", 60.0, observer_decay_shape},
      {6, "sample-and-hold reduction", 60.0, sample_hold_reduction},
      {7, "closed-loop stabilization", 120.0, closed_loop_stabilization},
      {8, "templated state feedback", 30.0, state_feedback},
      {9, "certification discriminates", 120.0, certification_discriminates},
      {10, "determinism", 120.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.ok && secs <= c.time_limit;
    if (!pass) ++failed;
    std::printf("[%s] %2d %-28s %s (%.2f s, limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.time_limit);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
