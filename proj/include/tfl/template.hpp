#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tfl/observability.hpp"
#include "tfl/system.hpp"

namespace tfl {

/// Vector polynomial on [0, T] in the normalized time tau = t / T:
/// v(t) = sum_j coeffs.col(j) * tau^j. Derivatives are exact.
class PolynomialSignal : public InputSignal {
 public:
  PolynomialSignal(double horizon, Matrix coeffs);

  int channels() const override { return static_cast<int>(coeffs_.rows()); }
  Matrix derivatives(double t, int order) const override;
  Vector value(double t) const;

  double horizon() const { return horizon_; }
  int degree() const { return static_cast<int>(coeffs_.cols()) - 1; }
  const Matrix& coeffs() const { return coeffs_; }

 private:
  double horizon_;
  Matrix coeffs_;  // p x (degree + 1)
};

/// Polynomial input with v*(0) = e1 exactly.
class ControlTemplate final : public PolynomialSignal {
 public:
  /// Throws std::invalid_argument unless coeffs.col(0) == e1 exactly.
  ControlTemplate(double horizon, Matrix coeffs);

  /// The constant template e1 on [0, horizon].
  static ControlTemplate constant(int p, double horizon);

  /// Order at which this template was certified, if any.
  std::optional<int> certified_order;
};

/// R in O(p) with R (|u0|, 0, ..., 0)^T = u0: identity when u0 is zero or
/// already along e1, otherwise the Householder reflection swapping e1 and u0/|u0|.
Matrix isometry_from(const Vector& u0);

/// R_new in R0(u_new) with || |u_prev| R_prev - |u_new| R_new || <= |u_prev - u_new|,
/// given R_prev in R0(u_prev): R_new is R_prev followed by the planar rotation
/// carrying u_prev/|u_prev| onto u_new/|u_new|.
Matrix isometry_update(const Vector& u_prev, const Matrix& R_prev, const Vector& u_new);

/// Nearest orthogonal matrix via QR with positive diagonal.
Matrix reorthonormalize(const Matrix& R);

/// mu_ref * R_ref * v with mu_ref = 1/|v(0)|, R_ref^{-1} in R0(v(0)).
/// Throws std::invalid_argument when v(0) = 0.
ControlTemplate normalize_template(const PolynomialSignal& v);

struct GridParams {
  int x_points = 11;            // per axis of the outer box
  int t_points = 5;             // over [0, T]
  int mu_points = 5;            // over [0, lambda_bar]
  std::vector<double> extra_mu; // additional scales to test
  int structured_rotations = 8; // p >= 2: rotations/reflections of the e1-e2 plane
  int random_rotations = 8;     // p >= 2: Haar samples
  std::uint64_t seed = 0;
  double min_margin = 1e-8;     // rho1, rho2 must exceed this to pass
  int threads = 1;
};

struct CertificationWitness {
  std::string kind;  // "immersion" or "injectivity"
  Vector xa;
  Vector xb;         // empty for immersion witnesses
  double t = 0.0;
  double mu = 0.0;
  Matrix R;
  double margin = 0.0;
};

struct CertificationReport {
  bool passed = false;
  int q = 0;
  double rho1 = 0.0;  // +inf when no off-diagonal pairs exist
  double rho2 = 0.0;
  double eta = 0.0;
  int x_samples = 0;
  int t_samples = 0;
  int mu_samples = 0;
  int rotation_samples = 0;
  std::uint64_t seed = 0;
  std::vector<CertificationWitness> witnesses;
};

/// The O(p) sample set: {+1, -1} for p = 1; identity, structured planar
/// rotations/reflections and seeded Haar draws for p >= 2.
std::vector<Matrix> rotation_samples(int p, const GridParams& grid);

/// Grid certification that x -> calH_q(x, t, mu R v) is an injective immersion
/// over the outer box for all sampled (t, mu, R).
/// Throws ConfigError when the grid is too coarse (eta >= box diameter) or m(q+1) < n.
CertificationReport certify_template(const SystemModel& sys, const CompactSpec& spec, const PolynomialSignal& v,
                                     int q, const GridParams& grid);

struct SearchResult {
  bool found = false;
  int attempt = -1;  // index of the returned candidate
  ControlTemplate tmpl;
  CertificationReport report;
};

struct SearchParams {
  int degree = 2;
  int attempts = 100;
  double radius = 1.0;  // initial half-width of the coefficient perturbation
  double shrink = 0.98; // radius multiplier per attempt
  std::uint64_t seed = 0;
};

/// Randomized search around `base`: attempt 0 certifies base itself, later
/// attempts perturb its coefficients (padded to `degree`), renormalize and
/// certify. Returns the first certified candidate, else the best one by
/// (rho2, rho1).
SearchResult search_template(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& base, int q,
                             const GridParams& grid, const SearchParams& params);

nlohmann::json to_json(const CertificationReport& report);
nlohmann::json to_json(const ControlTemplate& tmpl);

}  // namespace tfl
