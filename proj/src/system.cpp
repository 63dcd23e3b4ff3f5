#include "tfl/system.hpp"

#include <algorithm>
#include <cmath>

#include "tfl/errors.hpp"
#include "tfl/fit.hpp"

namespace tfl {

SystemModel SystemModel::from_sources(std::string name, int n, int p, int m,
                                      const std::vector<std::string>& f_src,
                                      const std::vector<std::string>& h_src,
                                      const std::vector<std::string>& lambda_src,
                                      const std::optional<std::string>& lyapunov_src) {
  if (n < 1 || p < 1 || m < 1) throw ConfigError("system dimensions must be positive");
  if (n > kMaxStateDim) {
    throw CapabilityError("state dimension " + std::to_string(n) + " exceeds " + std::to_string(kMaxStateDim));
  }
  auto check = [](const char* what, std::size_t got, int want) {
    if (static_cast<int>(got) != want) {
      throw ConfigError(std::string(what) + ": expected " + std::to_string(want) + " expressions, got " +
                        std::to_string(got));
    }
  };
  check("f", f_src.size(), n);
  check("h", h_src.size(), m);
  check("lambda", lambda_src.size(), p);

  SystemModel sys;
  sys.name = std::move(name);
  sys.n = n;
  sys.p = p;
  sys.m = m;
  for (const auto& s : f_src) sys.f.push_back(Expr::parse(s, n, p));
  for (const auto& s : h_src) {
    sys.h.push_back(Expr::parse(s, n, 0));
  }
  for (const auto& s : lambda_src) sys.lambda.push_back(Expr::parse(s, n, 0));
  if (lyapunov_src) sys.lyapunov = Expr::parse(*lyapunov_src, n, 0);
  return sys;
}

Vector SystemModel::flow(const Vector& x, const Vector& u) const {
  Vector out(n);
  flow<double>(std::span<const double>(x.data(), n), std::span<const double>(u.data(), p),
               std::span<double>(out.data(), n));
  return out;
}

Vector SystemModel::output(const Vector& x) const {
  Vector out(m);
  output<double>(std::span<const double>(x.data(), n), std::span<double>(out.data(), m));
  return out;
}

Vector SystemModel::feedback(const Vector& x) const {
  Vector out(p);
  const std::span<const double> xs(x.data(), n);
  for (int i = 0; i < p; ++i) out[i] = lambda[i].eval(xs, std::span<const double>{});
  return out;
}

std::optional<double> SystemModel::lyapunov_value(const Vector& x) const {
  if (!lyapunov) return std::nullopt;
  return lyapunov->eval(std::span<const double>(x.data(), n), std::span<const double>{});
}

bool Box::contains(const Vector& x, double tol) const {
  for (int i = 0; i < dim(); ++i) {
    if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
  }
  return true;
}

double Box::max_norm() const {
  double s = 0.0;
  for (int i = 0; i < dim(); ++i) {
    const double a = std::max(std::abs(lo[i]), std::abs(hi[i]));
    s += a * a;
  }
  return std::sqrt(s);
}

std::vector<Vector> Box::grid(int per_axis) const {
  const int n = dim();
  std::vector<int> counts(n);
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) {
    counts[i] = hi[i] > lo[i] ? std::max(per_axis, 1) : 1;
    total *= static_cast<std::size_t>(counts[i]);
  }
  std::vector<Vector> pts;
  pts.reserve(total);
  std::vector<int> idx(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = counts[i] == 1 ? 0.5 * (lo[i] + hi[i]) : lo[i] + (hi[i] - lo[i]) * idx[i] / (counts[i] - 1);
    }
    pts.push_back(std::move(x));
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
  }
  return pts;
}

double max_feedback_norm(const SystemModel& sys, const Box& box, int per_axis) {
  double best = 0.0;
  for (const auto& x : box.grid(per_axis)) best = std::max(best, sys.feedback(x).norm());
  return best;
}

CompactSpec CompactSpec::make(const SystemModel& sys, Box inner, Box outer, int lambda_grid) {
  if (inner.dim() != sys.n || outer.dim() != sys.n || inner.hi.size() != sys.n || outer.hi.size() != sys.n) {
    throw ConfigError("box dimension does not match the state dimension");
  }
  for (int i = 0; i < sys.n; ++i) {
    if (inner.lo[i] > inner.hi[i] || outer.lo[i] > outer.hi[i]) throw ConfigError("box with lo > hi");
    const bool degenerate = outer.lo[i] == outer.hi[i];
    const bool inside = degenerate ? (inner.lo[i] == outer.lo[i] && inner.hi[i] == outer.hi[i])
                                   : (inner.lo[i] > outer.lo[i] && inner.hi[i] < outer.hi[i]);
    if (!inside) throw ConfigError("inner box must lie strictly inside the outer box (axis " + std::to_string(i + 1) + ")");
  }
  if (lambda_grid <= 0) {
    lambda_grid = static_cast<int>(std::clamp(std::pow(2.0e4, 1.0 / sys.n), 3.0, 101.0));
  }
  CompactSpec spec;
  spec.inner = std::move(inner);
  spec.outer = std::move(outer);
  spec.lambda_grid = lambda_grid;
  spec.lambda_max = max_feedback_norm(sys, spec.outer, lambda_grid);
  spec.lambda_bar = spec.lambda_max * (1.0 + kLambdaMargin);
  return spec;
}

Vector SatMap::operator()(const Vector& x) const {
  const auto v = apply<double>(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

namespace {

Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Box b;
  b.lo = Eigen::Map<const Vector>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  b.hi = Eigen::Map<const Vector>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return b;
}

Matrix row(std::initializer_list<double> c) {
  Matrix m(1, static_cast<Eigen::Index>(c.size()));
  int j = 0;
  for (double v : c) m(0, j++) = v;
  return m;
}

}  // namespace

std::vector<std::string> builtin_names() { return {"linear2d", "bilinear2d", "bilinear_unobservable"}; }

BuiltinInstance builtin_system(const std::string& name) {
  BuiltinInstance inst;
  if (name == "linear2d") {
    // Undamped oscillator driven through the velocity; u = -x1 - 3 x2 puts the poles at -1, -2.
    inst.system = SystemModel::from_sources(name, 2, 1, 1, {"x2", "-x1 + u1"}, {"x1"}, {"-x1 - 3*x2"},
                                            "1.25*x1^2 + 0.5*x1*x2 + 0.25*x2^2");
    inst.spec = CompactSpec::make(inst.system, make_box({-1, -1}, {1, 1}), make_box({-3.5, -3.5}, {3.5, 3.5}));
    inst.q = 1;
    inst.delta = 0.05;
    inst.theta = 20.0;
    inst.horizon = 1.0;
    inst.template_coeffs = row({1.0, 0.5, -0.25});
  } else if (name == "bilinear2d") {
    inst.system = SystemModel::from_sources(name, 2, 1, 1, {"x2", "-x1 - x2 + u1*(1 + x1)"}, {"x1"},
                                            {"-x1 - x2"});
    inst.spec = CompactSpec::make(inst.system, make_box({-1, -1}, {1, 1}), make_box({-2.5, -2.5}, {2.5, 2.5}));
    inst.q = 1;
    inst.delta = 0.1;
    inst.theta = 20.0;
    inst.horizon = 2.0;
    inst.template_coeffs = row({1.0, 0.3, -0.2});
  } else if (name == "bilinear_unobservable") {
    // x' = (A + u B) x with A Hurwitz; the constant input u = 1 decouples x2 from y = x1.
    inst.system = SystemModel::from_sources(name, 2, 1, 1, {"-x1 + (1 - u1)*x2", "-x1 - x2"}, {"x1"},
                                            {"-x1"});
    inst.spec = CompactSpec::make(inst.system, make_box({-1, -1}, {1, 1}), make_box({-1.5, -1.5}, {1.5, 1.5}));
    inst.q = 2;
    inst.delta = 0.1;
    inst.theta = 10.0;
    inst.horizon = 1.0;
    inst.template_coeffs = row({1.0, 0.5});
    inst.bad_constant = 1.0;
  } else {
    throw ConfigError("unknown system '" + name + "'");
  }
  return inst;
}

LesReport verify_state_feedback_les(const SystemModel& sys, const CompactSpec& spec, double horizon,
                                    int grid_per_axis, double step) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  auto rhs = [&sys](const Vector& x) { return sys.flow(x, sys.feedback(x)); };
  LesReport report;
  report.min_rate = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(std::ceil(horizon / step - 1e-9));
  const double h = horizon / steps;
  for (const auto& x0 : spec.inner.grid(grid_per_axis)) {
    const double n0 = x0.norm();
    if (n0 == 0.0) continue;
    Vector x = x0;
    std::vector<TimeValue> series{{0.0, 1.0}};
    for (int k = 1; k <= steps; ++k) {
      const Vector k1 = rhs(x);
      const Vector k2 = rhs(x + 0.5 * h * k1);
      const Vector k3 = rhs(x + 0.5 * h * k2);
      const Vector k4 = rhs(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite() || !spec.outer.contains(x)) report.contained = false;
      if (!x.allFinite()) break;
      series.push_back({k * h, x.norm() / n0});
    }
    ++report.trajectories;
    double rate = 0.0;
    if (series.size() > 20) rate = fit_rate(series, {0.5 * horizon, horizon}).nu;
    report.rates.push_back(rate);
    report.min_rate = std::min(report.min_rate, rate);
  }
  if (report.trajectories == 0) report.min_rate = 0.0;
  return report;
}

}  // namespace tfl
