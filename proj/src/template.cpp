#include "tfl/template.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "tfl/errors.hpp"
#include "tfl/parallel.hpp"

namespace tfl {

// ---------------------------------------------------------------------------
// Polynomial signals
// ---------------------------------------------------------------------------
PolynomialSignal::PolynomialSignal(double horizon, Matrix coeffs) : horizon_(horizon), coeffs_(std::move(coeffs)) {
  if (!(horizon_ > 0.0)) throw std::invalid_argument("template horizon must be positive");
  if (coeffs_.rows() < 1 || coeffs_.cols() < 1) throw std::invalid_argument("empty template coefficients");
}

Matrix PolynomialSignal::derivatives(double t, int order) const {
  const int p = channels();
  const int deg = degree();
  const double tau = t / horizon_;
  Matrix d = Matrix::Zero(p, order + 1);
  double scale = 1.0;  // 1 / T^k
  for (int k = 0; k <= order; ++k) {
    if (k > deg) break;
    // Horner on sum_{j>=k} c_j * j!/(j-k)! * tau^(j-k)
    Vector acc = Vector::Zero(p);
    for (int j = deg; j >= k; --j) {
      double falling = 1.0;
      for (int i = 0; i < k; ++i) falling *= static_cast<double>(j - i);
      acc = acc * tau + falling * coeffs_.col(j);
    }
    d.col(k) = acc * scale;
    scale /= horizon_;
  }
  return d;
}

Vector PolynomialSignal::value(double t) const { return derivatives(t, 0).col(0); }

ControlTemplate::ControlTemplate(double horizon, Matrix coeffs) : PolynomialSignal(horizon, std::move(coeffs)) {
  const Vector c0 = this->coeffs().col(0);
  if (c0[0] != 1.0 || (c0.size() > 1 && c0.tail(c0.size() - 1).cwiseAbs().maxCoeff() != 0.0)) {
    throw std::invalid_argument("control template must start at e1 exactly");
  }
}

ControlTemplate ControlTemplate::constant(int p, double horizon) {
  Matrix c = Matrix::Zero(p, 1);
  c(0, 0) = 1.0;
  return ControlTemplate(horizon, c);
}

// ---------------------------------------------------------------------------
// Isometries
// ---------------------------------------------------------------------------
Matrix isometry_from(const Vector& u0) {
  const int p = static_cast<int>(u0.size());
  const double norm = u0.norm();
  Matrix I = Matrix::Identity(p, p);
  if (norm == 0.0) return I;
  const Vector a = u0 / norm;
  Vector w = -a;
  w[0] += 1.0;  // e1 - a
  const double ww = w.squaredNorm();
  if (ww == 0.0) return I;
  return I - (2.0 / ww) * w * w.transpose();
}

namespace {

// Unit vector orthogonal to `a`, built from the standard basis vector least aligned with it.
Vector orthogonal_unit(const Vector& a) {
  Eigen::Index k = 0;
  a.cwiseAbs().minCoeff(&k);
  Vector c = Vector::Unit(a.size(), k);
  c -= a.dot(c) * a;
  c -= a.dot(c) * a;
  return c.normalized();
}

}  // namespace

Matrix isometry_update(const Vector& u_prev, const Matrix& R_prev, const Vector& u_new) {
  const int p = static_cast<int>(u_new.size());
  const double np = u_prev.norm();
  const double nn = u_new.norm();
  if (nn == 0.0) return R_prev;
  if (p == 1) {
    Matrix R(1, 1);
    R(0, 0) = u_new[0] > 0 ? 1.0 : -1.0;
    return R;
  }
  if (np == 0.0) return isometry_from(u_new);

  const Vector a = u_prev / np;
  const Vector b = u_new / nn;
  const double cos_psi = a.dot(b);
  Vector c = b - cos_psi * a;
  c -= a.dot(c) * a;
  double sin_psi = c.norm();
  constexpr double kCollinear = 1e-14;
  if (sin_psi < kCollinear) {
    if (cos_psi > 0.0) return R_prev;
    c = orthogonal_unit(a);
    sin_psi = 0.0;
  } else {
    c /= sin_psi;
  }
  const double psi = std::atan2(sin_psi, cos_psi);
  const double cp = std::cos(psi);
  const double sp = std::sin(psi);
  // Rotation by psi in span{a, c}, identity on the orthogonal complement.
  Matrix rot = Matrix::Identity(p, p) + (cp - 1.0) * (a * a.transpose() + c * c.transpose()) +
               sp * (c * a.transpose() - a * c.transpose());
  return rot * R_prev;
}

Matrix reorthonormalize(const Matrix& R) {
  Eigen::HouseholderQR<Matrix> qr(R);
  Matrix Q = qr.householderQ() * Matrix::Identity(R.rows(), R.cols());
  const Matrix upper = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < Q.cols(); ++i) {
    if (upper(i, i) < 0) Q.col(i) *= -1.0;
  }
  return Q;
}

ControlTemplate normalize_template(const PolynomialSignal& v) {
  const Vector v0 = v.coeffs().col(0);
  const double norm = v0.norm();
  if (norm == 0.0) throw std::invalid_argument("cannot normalize an input vanishing at t = 0");
  // R_ref^{-1} = isometry_from(v0); Householder reflections are symmetric orthogonal.
  const Matrix R_ref = isometry_from(v0).transpose();
  Matrix c = (1.0 / norm) * (R_ref * v.coeffs());
  c.col(0).setZero();
  c(0, 0) = 1.0;
  return ControlTemplate(v.horizon(), c);
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------
namespace {

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v;
  if (count <= 1) {
    v.push_back(lo);
    return v;
  }
  for (int k = 0; k < count; ++k) v.push_back(lo + (hi - lo) * k / (count - 1));
  return v;
}

Matrix planar(int p, double angle, bool reflect) {
  Matrix G = Matrix::Identity(p, p);
  G(0, 0) = std::cos(angle);
  G(0, 1) = -std::sin(angle);
  G(1, 0) = std::sin(angle);
  G(1, 1) = std::cos(angle);
  if (reflect) G.col(1) *= -1.0;
  return G;
}

struct ComboResult {
  double rho2 = std::numeric_limits<double>::infinity();
  int rho2_index = -1;
  double rho1 = std::numeric_limits<double>::infinity();
  int rho1_a = -1;
  int rho1_b = -1;
};

}  // namespace

std::vector<Matrix> rotation_samples(int p, const GridParams& grid) {
  std::vector<Matrix> out;
  if (p == 1) {
    out.push_back(Matrix::Constant(1, 1, 1.0));
    out.push_back(Matrix::Constant(1, 1, -1.0));
    return out;
  }
  out.push_back(Matrix::Identity(p, p));
  const int S = std::max(grid.structured_rotations, 1);
  for (int k = 1; k < S; ++k) out.push_back(planar(p, 2.0 * std::numbers::pi * k / S, false));
  for (int k = 0; k < S; ++k) out.push_back(planar(p, 2.0 * std::numbers::pi * k / S, true));
  std::mt19937_64 rng(grid.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < grid.random_rotations; ++r) {
    Matrix G(p, p);
    for (int j = 0; j < p; ++j) {
      for (int i = 0; i < p; ++i) G(i, j) = gauss(rng);
    }
    out.push_back(reorthonormalize(G));
  }
  return out;
}

CertificationReport certify_template(const SystemModel& sys, const CompactSpec& spec, const PolynomialSignal& v,
                                     int q, const GridParams& grid) {
  check_jet_order(q);
  if (sys.m * (q + 1) < sys.n) {
    throw ConfigError("m(q+1) = " + std::to_string(sys.m * (q + 1)) + " < n = " + std::to_string(sys.n) +
                      ": calH cannot be injective");
  }
  if (v.channels() != sys.p) throw ConfigError("template has wrong number of input channels");

  const Box& box = spec.outer;
  const double diameter = box.diameter();
  double cell2 = 0.0;
  for (int i = 0; i < box.dim(); ++i) {
    if (box.hi[i] > box.lo[i]) {
      if (grid.x_points < 2) throw ConfigError("x grid needs at least 2 points per non-degenerate axis");
      const double h = (box.hi[i] - box.lo[i]) / (grid.x_points - 1);
      cell2 += h * h;
    }
  }
  const double eta = 2.0 * std::sqrt(cell2);
  if (diameter > 0.0 && eta >= diameter) {
    throw ConfigError("certification grid too coarse: eta = " + std::to_string(eta) +
                      " >= box diameter " + std::to_string(diameter));
  }

  const std::vector<Vector> xs = box.grid(grid.x_points);
  const std::vector<double> ts = linspace(0.0, v.horizon(), grid.t_points);
  std::vector<double> mus = linspace(0.0, spec.lambda_bar, grid.mu_points);
  mus.insert(mus.end(), grid.extra_mu.begin(), grid.extra_mu.end());
  const std::vector<Matrix> Rs = rotation_samples(sys.p, grid);

  const std::size_t combos = ts.size() * mus.size() * Rs.size();
  auto unpack = [&](std::size_t c) {
    const std::size_t r = c % Rs.size();
    const std::size_t mu = (c / Rs.size()) % mus.size();
    const std::size_t t = c / (Rs.size() * mus.size());
    return std::array<std::size_t, 3>{t, mu, r};
  };

  std::vector<ComboResult> results(combos);
  parallel_for(combos, grid.threads, [&](std::size_t c) {
    const auto [ti, mi, ri] = unpack(c);
    const InputJet sigma = scaled_input_jet(v, ts[ti], mus[mi], Rs[ri], std::max(q - 1, 0));
    ComboResult& res = results[c];
    std::vector<Vector> stacks(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const auto sj = calH_with_jacobian(sys, xs[k], sigma, q);
      stacks[k] = sj.values;
      const double smin = Eigen::JacobiSVD<Matrix>(sj.jacobian).singularValues().minCoeff();
      if (smin < res.rho2) {
        res.rho2 = smin;
        res.rho2_index = static_cast<int>(k);
      }
    }
    for (std::size_t a = 0; a < xs.size(); ++a) {
      for (std::size_t b = a + 1; b < xs.size(); ++b) {
        const double dx = (xs[a] - xs[b]).norm();
        if (dx < eta) continue;
        const double ratio = (stacks[a] - stacks[b]).norm() / dx;
        if (ratio < res.rho1) {
          res.rho1 = ratio;
          res.rho1_a = static_cast<int>(a);
          res.rho1_b = static_cast<int>(b);
        }
      }
    }
  });

  CertificationReport report;
  report.q = q;
  report.eta = eta;
  report.x_samples = static_cast<int>(xs.size());
  report.t_samples = static_cast<int>(ts.size());
  report.mu_samples = static_cast<int>(mus.size());
  report.rotation_samples = static_cast<int>(Rs.size());
  report.seed = grid.seed;
  report.rho1 = std::numeric_limits<double>::infinity();
  report.rho2 = std::numeric_limits<double>::infinity();
  std::size_t c2 = 0, c1 = 0;
  for (std::size_t c = 0; c < combos; ++c) {
    if (results[c].rho2 < report.rho2) {
      report.rho2 = results[c].rho2;
      c2 = c;
    }
    if (results[c].rho1 < report.rho1) {
      report.rho1 = results[c].rho1;
      c1 = c;
    }
  }
  {
    const auto [ti, mi, ri] = unpack(c2);
    report.witnesses.push_back({"immersion", xs[results[c2].rho2_index], Vector(), ts[ti], mus[mi], Rs[ri], report.rho2});
  }
  if (std::isfinite(report.rho1)) {
    const auto [ti, mi, ri] = unpack(c1);
    report.witnesses.push_back({"injectivity", xs[results[c1].rho1_a], xs[results[c1].rho1_b], ts[ti], mus[mi],
                                Rs[ri], report.rho1});
  }
  report.passed = report.rho2 > grid.min_margin && report.rho1 > grid.min_margin;
  return report;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------
namespace {

bool better(const CertificationReport& a, const CertificationReport& b) {
  if (a.rho2 != b.rho2) return a.rho2 > b.rho2;
  return a.rho1 > b.rho1;
}

}  // namespace

SearchResult search_template(const SystemModel& sys, const CompactSpec& spec, const ControlTemplate& base, int q,
                             const GridParams& grid, const SearchParams& params) {
  if (params.attempts < 1) throw std::invalid_argument("search needs at least one attempt");
  CertificationReport base_report = certify_template(sys, spec, base, q, grid);
  SearchResult best{base_report.passed, 0, base, base_report};
  if (best.found) {
    best.tmpl.certified_order = q;
    return best;
  }

  const int cols = std::max(params.degree, base.degree()) + 1;
  Matrix padded = Matrix::Zero(sys.p, cols);
  padded.leftCols(base.coeffs().cols()) = base.coeffs();

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double radius = params.radius;
  for (int attempt = 1; attempt < params.attempts; ++attempt) {
    Matrix c = padded;
    for (int j = 0; j < cols; ++j) {
      for (int i = 0; i < sys.p; ++i) c(i, j) += radius * unif(rng);
    }
    radius *= params.shrink;
    if (c.col(0).norm() == 0.0) continue;
    ControlTemplate cand = normalize_template(PolynomialSignal(base.horizon(), c));
    CertificationReport rep = certify_template(sys, spec, cand, q, grid);
    if (rep.passed) {
      cand.certified_order = q;
      return SearchResult{true, attempt, cand, rep};
    }
    if (better(rep, best.report)) best = SearchResult{false, attempt, cand, rep};
  }
  return best;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------
namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Vector r = m.row(i).transpose();
    rows.push_back(vec_json(r));
  }
  return rows;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const CertificationReport& report) {
  nlohmann::json j;
  j["passed"] = report.passed;
  j["q"] = report.q;
  j["rho1"] = finite_or_null(report.rho1);
  j["rho1_vacuous"] = !std::isfinite(report.rho1);
  j["rho2"] = finite_or_null(report.rho2);
  j["eta"] = report.eta;
  j["grid"] = {{"x", report.x_samples}, {"t", report.t_samples}, {"mu", report.mu_samples},
               {"R", report.rotation_samples}};
  j["seed"] = report.seed;
  nlohmann::json w = nlohmann::json::array();
  for (const auto& wit : report.witnesses) {
    nlohmann::json e{{"kind", wit.kind}, {"x_a", vec_json(wit.xa)}, {"t", wit.t}, {"mu", wit.mu},
                     {"R", mat_json(wit.R)}, {"margin", wit.margin}};
    if (wit.xb.size() > 0) e["x_b"] = vec_json(wit.xb);
    w.push_back(e);
  }
  j["witnesses"] = w;
  return j;
}

nlohmann::json to_json(const ControlTemplate& tmpl) {
  nlohmann::json j;
  j["horizon"] = tmpl.horizon();
  j["coeffs"] = mat_json(tmpl.coeffs());
  j["certified_order"] = tmpl.certified_order ? nlohmann::json(*tmpl.certified_order) : nlohmann::json(nullptr);
  return j;
}

}  // namespace tfl
