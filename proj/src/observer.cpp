#include "tfl/observer.hpp"

#include <cmath>

#include "tfl/errors.hpp"

namespace tfl {

std::vector<double> hurwitz_gains(int q) {
  if (q < 0) throw std::invalid_argument("observer order must be non-negative");
  // Row q+1 of Pascal's triangle.
  std::vector<double> row{1.0};
  for (int k = 1; k <= q + 1; ++k) {
    std::vector<double> next(k + 1, 1.0);
    for (int j = 1; j < k; ++j) next[j] = row[j - 1] + row[j];
    row = std::move(next);
  }
  return {row.begin() + 1, row.end()};
}

double max_root_real_part(const std::vector<double>& gains) {
  const int deg = static_cast<int>(gains.size());
  if (deg == 0) throw std::invalid_argument("empty gain vector");
  // Companion matrix of s^deg + c_0 s^{deg-1} + ... + c_{deg-1}.
  Matrix C = Matrix::Zero(deg, deg);
  for (int j = 0; j < deg; ++j) C(0, j) = -gains[j];
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Matrix> es(C, false);
  return es.eigenvalues().real().maxCoeff();
}

void ObserverConfig::validate() const {
  if (q < 0) throw ConfigError("observer order q must be non-negative");
  if (static_cast<int>(gains.size()) != q + 1) {
    throw ConfigError("observer needs q+1 = " + std::to_string(q + 1) + " gains, got " +
                      std::to_string(gains.size()));
  }
  if (!(max_root_real_part(gains) < -1e-9)) throw ConfigError("observer gains are not Hurwitz");
  if (!(theta >= 1.0)) throw ConfigError("observer gain theta must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("sampling period delta must be positive");
}

namespace {

Vector project_ball(Vector x, double radius) {
  const double n = x.norm();
  if (n > radius) x *= radius / n;
  return x;
}

}  // namespace

PhiResult phi_invert(const SystemModel& sys, const Vector& z, const InputJet& sigma, int q, const SatMap& sat,
                     const Vector& warm_start, const PhiOptions& options) {
  const double radius = sat.bound();
  PhiResult out;
  out.x_hat = project_ball(warm_start, radius);

  auto evaluate = [&](const Vector& x, StackWithJacobian& sj, Vector& r) -> bool {
    try {
      sj = calH_with_jacobian(sys, x, sigma, q);
    } catch (const NumericalError&) {
      return false;
    }
    r = sj.values - z;
    return true;
  };

  StackWithJacobian sj;
  Vector r;
  if (!evaluate(out.x_hat, sj, r)) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  double cost = r.squaredNorm();
  Matrix JtJ = sj.jacobian.transpose() * sj.jacobian;
  Vector g = sj.jacobian.transpose() * r;
  double damping = 1e-3 * std::max(JtJ.diagonal().maxCoeff(), 1e-12);

  // First-order optimality on the ball: the projected gradient step vanishes.
  // In the interior this is |J^T r|.
  auto stationarity = [&](const Vector& x, const Vector& grad) { return (x - project_ball(x - grad, radius)).norm(); };

  while (true) {
    if (std::sqrt(cost) < options.residual_tol || stationarity(out.x_hat, g) < options.gradient_tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= options.max_iterations) break;
    ++out.iterations;
    // With the ball constraint active, step in the tangent plane of the sphere;
    // -g.x / |x|^2 is the curvature term the sphere adds to the model.
    Matrix P = Matrix::Identity(sys.n, sys.n);
    double curvature = 0.0;
    const double xn = out.x_hat.norm();
    if (xn >= radius * (1.0 - 1e-12) && g.dot(out.x_hat) < 0.0) {
      const Vector normal = out.x_hat / xn;
      P -= normal * normal.transpose();
      curvature = -g.dot(out.x_hat) / (xn * xn);
    }
    const Matrix A = P * (JtJ + curvature * Matrix::Identity(sys.n, sys.n)) * P +
                     damping * Matrix::Identity(sys.n, sys.n);
    const Vector step = A.ldlt().solve(-(P * g));
    const Vector trial = project_ball(out.x_hat + step, radius);
    StackWithJacobian sj_t;
    Vector r_t;
    bool accept = evaluate(trial, sj_t, r_t);
    Vector g_t;
    if (accept) {
      g_t = sj_t.jacobian.transpose() * r_t;
      // Near a minimizer with a nonzero residual the cost stalls at rounding
      // level; there a smaller projected gradient decides.
      const double c_t = r_t.squaredNorm();
      accept = c_t < cost ||
               (c_t <= cost * (1.0 + 1e-13) && stationarity(trial, g_t) < stationarity(out.x_hat, g));
    }
    if (accept) {
      out.x_hat = trial;
      cost = r_t.squaredNorm();
      JtJ = sj_t.jacobian.transpose() * sj_t.jacobian;
      g = g_t;
      damping = std::max(damping / 10.0, 1e-15);
    } else {
      damping *= 10.0;
      if (damping > 1e20) break;
    }
  }
  out.residual = std::sqrt(cost);
  return out;
}

HighGainObserver::HighGainObserver(const SystemModel& sys, ObserverConfig cfg, SatMap sat, Vector warm_start)
    : sys_(sys), cfg_(std::move(cfg)), sat_(sat), warm_(std::move(warm_start)) {
  cfg_.validate();
  double tp = 1.0;
  for (int i = 0; i <= cfg_.q; ++i) {
    tp *= cfg_.theta;
    theta_pow_.push_back(tp * cfg_.gains[i]);
  }
}

PhiResult HighGainObserver::estimate(const Vector& z, const InputJet& sigma) {
  PhiResult r = phi_invert(sys_, z, sigma, cfg_.q, sat_, warm_);
  warm_ = r.x_hat;
  last_converged_ = r.converged;
  if (!r.converged) ++failures_;
  return r;
}

Vector HighGainObserver::rhs(const Vector& y, const Vector& z, const InputJet& sigma) {
  const int m = sys_.m;
  const int q = cfg_.q;
  const Vector innovation = y - z.head(m);
  Vector dz(z.size());
  for (int i = 0; i < q; ++i) dz.segment(i * m, m) = z.segment((i + 1) * m, m) + theta_pow_[i] * innovation;
  const Vector x_hat = sat_(estimate(z, sigma).x_hat);
  dz.segment(q * m, m) = hk(sys_, x_hat, sigma, q + 1) + theta_pow_[q] * innovation;
  return dz;
}

}  // namespace tfl
