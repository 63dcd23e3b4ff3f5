#pragma once

// System descriptions (f, h, lambda), working boxes, the smooth saturation
// map and the built-in benchmark instances.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfl/expr.hpp"
#include "tfl/jet.hpp"

namespace tfl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Analytic control system  x' = f(x,u), y = h(x)  with stabilizing feedback u = lambda(x).
struct SystemModel {
  std::string name;
  int n = 0;  // states
  int p = 0;  // inputs
  int m = 0;  // outputs
  std::vector<Expr> f;       // n entries, may use u
  std::vector<Expr> h;       // m entries, state only
  std::vector<Expr> lambda;  // p entries, state only
  std::optional<Expr> lyapunov;

  /// Builds a model from expression sources. Throws ConfigError on bad sizes or syntax.
  static SystemModel from_sources(std::string name, int n, int p, int m,
                                  const std::vector<std::string>& f_src,
                                  const std::vector<std::string>& h_src,
                                  const std::vector<std::string>& lambda_src,
                                  const std::optional<std::string>& lyapunov_src = std::nullopt);

  template <class S>
  void flow(std::span<const S> x, std::span<const S> u, std::span<S> out) const {
    for (int i = 0; i < n; ++i) out[i] = f[i].eval(x, u);
  }

  template <class S>
  void output(std::span<const S> x, std::span<S> out) const {
    for (int i = 0; i < m; ++i) out[i] = h[i].eval(x, std::span<const S>{});
  }

  Vector flow(const Vector& x, const Vector& u) const;
  Vector output(const Vector& x) const;
  Vector feedback(const Vector& x) const;
  std::optional<double> lyapunov_value(const Vector& x) const;
};

/// Axis-aligned box [lo, hi].
struct Box {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vector& x, double tol = 0.0) const;
  Vector center() const { return 0.5 * (lo + hi); }
  double diameter() const { return (hi - lo).norm(); }
  /// Euclidean norm of the farthest point of the box from the origin.
  double max_norm() const;
  /// Tensor grid with `per_axis` points per non-degenerate axis (one point on
  /// degenerate axes), row-major in axis order.
  std::vector<Vector> grid(int per_axis) const;
};

/// Working compacts: inner (basin target) inside outer (no-escape set), plus the
/// input bound lambda_bar over the outer box.
struct CompactSpec {
  Box inner;
  Box outer;
  double lambda_max = 0.0;   // grid maximum of |lambda| over outer
  double lambda_bar = 0.0;   // lambda_max with safety margin
  int lambda_grid = 0;       // points per axis used for lambda_max

  static constexpr double kLambdaMargin = 0.10;

  /// Validates inner ⊂ outer (strictly on non-degenerate axes) and computes lambda_bar.
  static CompactSpec make(const SystemModel& sys, Box inner, Box outer, int lambda_grid = 0);
};

/// Grid maximum of |lambda| over `box`.
double max_feedback_norm(const SystemModel& sys, const Box& box, int per_axis);

/// Smooth radial saturation: identity on the ball of radius rho, constant
/// modulus 1.5 rho beyond 2 rho, C-infinity transition on [rho, 2 rho], so
/// |sat(x)| <= 2 rho everywhere.
class SatMap {
 public:
  explicit SatMap(double rho) : rho_(rho) {}
  static SatMap for_box(const Box& outer) { return SatMap(outer.max_norm()); }

  double radius() const { return rho_; }
  double bound() const { return 2.0 * rho_; }

  Vector operator()(const Vector& x) const;

  template <class S>
  std::vector<S> apply(std::span<const S> x) const;

 private:
  double rho_;
};

namespace detail {

template <class S>
S divide(double c, const S& v) {
  return constant_like(v, c) / v;
}

// C-infinity step: 0 at t<=0, 1 at t>=1.
template <class S>
S smooth_step(const S& t) {
  using std::exp;
  const double tv = value_of(t);
  if (tv <= 0.0) return constant_like(t, 0.0);
  if (tv >= 1.0) return constant_like(t, 1.0);
  const S a = exp(divide(-1.0, t));
  const S b = exp(divide(-1.0, 1.0 - t));
  return a / (a + b);
}

}  // namespace detail

template <class S>
std::vector<S> SatMap::apply(std::span<const S> x) const {
  using std::sqrt;
  std::vector<S> out(x.begin(), x.end());
  S r2 = x[0] * x[0];
  for (std::size_t i = 1; i < x.size(); ++i) r2 = r2 + x[i] * x[i];
  if (std::sqrt(value_of(r2)) <= rho_) return out;
  const S r = sqrt(r2);
  const S w = detail::smooth_step((r - rho_) / rho_);
  const S factor = (1.0 - w) + w * detail::divide(1.5 * rho_, r);
  for (auto& v : out) v = v * factor;
  return out;
}

/// A benchmark instance with recommended tuning.
struct BuiltinInstance {
  SystemModel system;
  CompactSpec spec;
  int q = 1;
  double delta = 0.1;
  double theta = 10.0;
  double horizon = 1.0;
  /// Template coefficients (p x (d+1), powers of t/horizon) used by the fixtures.
  Matrix template_coeffs;
  /// For bilinear_unobservable: the constant input that destroys observability.
  std::optional<double> bad_constant;
};

/// name in {linear2d, bilinear2d, bilinear_unobservable}; throws ConfigError otherwise.
BuiltinInstance builtin_system(const std::string& name);
std::vector<std::string> builtin_names();

struct LesReport {
  double min_rate = 0.0;    // smallest fitted decay rate over non-trivial trajectories
  bool contained = true;    // every trajectory stayed in the outer box
  int trajectories = 0;
  std::vector<double> rates;
};

/// Integrates x' = f(x, lambda(x)) from a grid of the inner box over [0, horizon]
/// and fits |x(t)| <= M exp(-nu t) |x0| on the second half of each trajectory.
LesReport verify_state_feedback_les(const SystemModel& sys, const CompactSpec& spec, double horizon,
                                    int grid_per_axis, double step = 1e-3);

}  // namespace tfl
