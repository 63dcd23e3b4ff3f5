#pragma once

#include <vector>

#include "tfl/observability.hpp"
#include "tfl/system.hpp"

namespace tfl {

/// High-gain observer tuning.
struct ObserverConfig {
  int q = 1;
  std::vector<double> gains;  // c_0 .. c_q
  double theta = 10.0;
  double delta = 0.1;

  /// Throws ConfigError unless gains has q+1 entries forming a Hurwitz
  /// polynomial s^{q+1} + c_0 s^q + ... + c_q, theta >= 1 and delta > 0.
  void validate() const;
};

/// Coefficients of (s+1)^{q+1} without the leading 1: c_i = C(q+1, i+1).
std::vector<double> hurwitz_gains(int q);

/// Largest real part of the roots of s^{q+1} + c_0 s^q + ... + c_q.
double max_root_real_part(const std::vector<double>& gains);

struct PhiResult {
  Vector x_hat;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PhiOptions {
  int max_iterations = 50;
  double gradient_tol = 1e-10;
  double residual_tol = 1e-9;
};

/// Left inverse of x -> calH_q(x, sigma): Levenberg-Marquardt on |calH_q(x) - z|^2
/// from `warm_start`, iterates kept inside the ball of radius sat.bound().
/// Non-convergence is reported through `converged`, never thrown.
PhiResult phi_invert(const SystemModel& sys, const Vector& z, const InputJet& sigma, int q, const SatMap& sat,
                     const Vector& warm_start, const PhiOptions& options = {});

/// Observer right-hand side for one run. Owns the warm-start cell used by phi.
class HighGainObserver {
 public:
  HighGainObserver(const SystemModel& sys, ObserverConfig cfg, SatMap sat, Vector warm_start);

  /// z' given the measured output y and the input jet of order >= q at the current instant.
  Vector rhs(const Vector& y, const Vector& z, const InputJet& sigma);

  /// phi(z) with warm start, updating the cell. The returned estimate is not saturated.
  PhiResult estimate(const Vector& z, const InputJet& sigma);

  const ObserverConfig& config() const { return cfg_; }
  const SatMap& sat() const { return sat_; }
  const Vector& warm_start() const { return warm_; }
  void set_warm_start(Vector x) { warm_ = std::move(x); }
  bool last_converged() const { return last_converged_; }
  long failures() const { return failures_; }

 private:
  const SystemModel& sys_;
  ObserverConfig cfg_;
  SatMap sat_;
  Vector warm_;
  std::vector<double> theta_pow_;  // theta^{i+1} c_i
  bool last_converged_ = true;
  long failures_ = 0;
};

}  // namespace tfl
