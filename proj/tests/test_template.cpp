#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tfl/errors.hpp"
#include "tfl/template.hpp"

using namespace tfl;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double max_abs(const Matrix& M) { return M.cwiseAbs().maxCoeff(); }

// Random vector with occasional exact zeros and repeated directions.
Vector random_vector(std::mt19937_64& rng, int p) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(p);
  for (int i = 0; i < p; ++i) v[i] = g(rng);
  return v * std::exp(g(rng));
}

}  // namespace

TEST_CASE("isometry_from on the documented examples") {
  CHECK(isometry_from(vec({3, 0})) == Matrix::Identity(2, 2));
  CHECK(isometry_from(vec({0, 0, 0})) == Matrix::Identity(3, 3));
  const Matrix R = isometry_from(vec({0, 2}));
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK(max_abs(R - swap) < 1e-15);
  CHECK(max_abs(R.transpose() * R - Matrix::Identity(2, 2)) < 1e-15);
  CHECK(max_abs(R * vec({2, 0}) - vec({0, 2})) < 1e-15);
  CHECK(isometry_from(vec({-4}))(0, 0) == -1.0);
}

TEST_CASE("isometry_from is orthogonal and maps |u0| e1 to u0") {
  std::mt19937_64 rng(42);
  for (int p : {1, 2, 3, 5}) {
    CAPTURE(p);
    for (int k = 0; k < 1000; ++k) {
      const Vector u0 = random_vector(rng, p);
      const Matrix R = isometry_from(u0);
      CHECK(max_abs(R.transpose() * R - Matrix::Identity(p, p)) < 1e-12);
      Vector e = Vector::Zero(p);
      e[0] = u0.norm();
      CHECK((R * e - u0).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + u0.norm()));
    }
  }
}

TEST_CASE("isometry_update on the documented examples") {
  // Quarter turn: the bound is attained.
  const Matrix R = isometry_update(vec({1, 0}), Matrix::Identity(2, 2), vec({0, 1}));
  Matrix rot(2, 2);
  rot << 0, -1, 1, 0;
  CHECK(max_abs(R - rot) < 1e-15);
  CHECK(oracle::op_norm(Matrix::Identity(2, 2) - R) == doctest::Approx(std::sqrt(2.0)));

  // No motion.
  const Matrix Rp = isometry_from(vec({0.3, -1.2, 0.5}));
  CHECK(isometry_update(vec({0.3, -1.2, 0.5}), Rp, vec({0.3, -1.2, 0.5})) == Rp);

  // Scalar case over all sign combinations.
  for (double a : {2.0, -2.0}) {
    for (double b : {3.0, -3.0}) {
      const Matrix Ra = isometry_from(vec({a}));
      const Matrix Rb = isometry_update(vec({a}), Ra, vec({b}));
      CHECK(Rb(0, 0) == (b > 0 ? 1.0 : -1.0));
      CHECK(std::abs(std::abs(a) * Ra(0, 0) - std::abs(b) * Rb(0, 0)) <= std::abs(a - b) + 1e-15);
    }
  }
  // Zero endpoints.
  CHECK(isometry_update(vec({1, 2}), Rp.topLeftCorner(2, 2), vec({0, 0})) == Rp.topLeftCorner(2, 2));
  CHECK(isometry_update(vec({0, 0}), Matrix::Identity(2, 2), vec({0, 5})) == isometry_from(vec({0, 5})));
}

TEST_CASE("isometry_update satisfies the Lipschitz selection bound") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> kind(0, 5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int p : {1, 2, 3, 5}) {
    CAPTURE(p);
    for (int k = 0; k < 1000; ++k) {
      Vector a = random_vector(rng, p), b = random_vector(rng, p);
      switch (kind(rng)) {
        case 0: b = a * std::exp(g(rng)); break;           // parallel
        case 1: b = -a * std::exp(g(rng)); break;          // antiparallel
        case 2: b.setZero(); break;
        case 3: a.setZero(); break;
        default: break;
      }
      const Matrix Ra = isometry_from(a);
      const Matrix Rb = reorthonormalize(isometry_update(a, Ra, b));
      const double lhs = oracle::op_norm(a.norm() * Ra - b.norm() * Rb);
      CHECK(lhs <= (a - b).norm() + 1e-10);
      CHECK(max_abs(Rb.transpose() * Rb - Matrix::Identity(p, p)) < 1e-12);
      Vector e = Vector::Zero(p);
      e[0] = b.norm();
      CHECK((Rb * e - b).norm() <= 1e-8 * (1.0 + b.norm()));
    }
  }
}

TEST_CASE("polynomial signals have exact derivatives") {
  Matrix c(2, 4);
  c << 1, 2, -1, 0.5, 0, 1, 3, -2;
  const double T = 2.0, t = 0.8, tau = t / T;
  const PolynomialSignal v(T, c);
  const Matrix d = v.derivatives(t, 5);
  for (int r = 0; r < 2; ++r) {
    const double c0 = c(r, 0), c1 = c(r, 1), c2 = c(r, 2), c3 = c(r, 3);
    CHECK(d(r, 0) == doctest::Approx(c0 + c1 * tau + c2 * tau * tau + c3 * tau * tau * tau));
    CHECK(d(r, 1) == doctest::Approx((c1 + 2 * c2 * tau + 3 * c3 * tau * tau) / T));
    CHECK(d(r, 2) == doctest::Approx((2 * c2 + 6 * c3 * tau) / (T * T)));
    CHECK(d(r, 3) == doctest::Approx(6 * c3 / (T * T * T)));
    CHECK(d(r, 4) == 0.0);
    CHECK(d(r, 5) == 0.0);
  }
}

TEST_CASE("control templates start at e1") {
  CHECK_NOTHROW(ControlTemplate(1.0, Matrix::Identity(2, 2)));
  CHECK_THROWS_AS(ControlTemplate(1.0, Matrix::Constant(1, 1, 0.5)), std::invalid_argument);
  const auto k = ControlTemplate::constant(3, 2.0);
  CHECK(k.value(1.3) == vec({1, 0, 0}));
}

TEST_CASE("normalize_template") {
  // Constant (2c, 0): normalized to e1.
  Matrix k(2, 1);
  k << 7.0, 0.0;
  const auto nk = normalize_template(PolynomialSignal(1.0, k));
  CHECK(nk.value(0.5) == vec({1, 0}));

  // v(0) along e2.
  Matrix c(2, 3);
  c << 0, 1, -1, 3, 0.5, 2;
  const auto n1 = normalize_template(PolynomialSignal(1.5, c));
  CHECK(n1.value(0.0) == vec({1, 0}));
  // mu_ref R_ref v keeps the shape: |v*(t)| = |v(t)| / |v(0)|.
  for (double t : {0.3, 0.9, 1.5}) {
    CHECK(n1.value(t).norm() == doctest::Approx(PolynomialSignal(1.5, c).value(t).norm() / 3.0).epsilon(1e-14));
  }

  // Idempotent on normalized inputs.
  const auto n2 = normalize_template(n1);
  CHECK(n2.coeffs() == n1.coeffs());

  CHECK_THROWS_AS(normalize_template(PolynomialSignal(1.0, Matrix::Zero(2, 2))), std::invalid_argument);
}

TEST_CASE("rotation samples are orthogonal and seeded") {
  GridParams g;
  const auto p1 = rotation_samples(1, g);
  REQUIRE(p1.size() == 2);
  CHECK(p1[0](0, 0) == 1.0);
  CHECK(p1[1](0, 0) == -1.0);
  const auto a = rotation_samples(3, g), b = rotation_samples(3, g);
  CHECK(a.size() == static_cast<std::size_t>(2 * g.structured_rotations + g.random_rotations));
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(max_abs(a[k].transpose() * a[k] - Matrix::Identity(3, 3)) < 1e-12);
    CHECK(a[k] == b[k]);
  }
  g.seed = 1;
  CHECK(rotation_samples(3, g).back() != a.back());
}

TEST_CASE("certification of the null input on linear2d") {
  const auto inst = builtin_system("linear2d");
  const auto tmpl = ControlTemplate::constant(1, 1.0);
  Matrix O(2, 2);
  O << 1, 0, 0, 1;  // (C; CA) for A = [0 1; -1 0], C = [1 0]
  const double smin = Eigen::JacobiSVD<Matrix>(O).singularValues().minCoeff();
  // The Jacobian of a linear system does not depend on (t, mu, R): rho2 is the same on any grid.
  for (int pts : {2, 3, 5}) {
    GridParams g;
    g.t_points = pts;
    g.mu_points = pts + 1;
    const auto rep = certify_template(inst.system, inst.spec, tmpl, 1, g);
    CHECK(rep.passed);
    CHECK(std::abs(rep.rho2 - smin) < 1e-9);
    CHECK(rep.rho1 >= smin - 1e-9);
    CHECK(rep.mu_samples == pts + 1);
  }
}

TEST_CASE("the bad constant fails certification with a witness") {
  const auto inst = builtin_system("bilinear_unobservable");
  const Matrix bad = Matrix::Constant(1, 1, 1.0);
  GridParams g;
  g.extra_mu = {*inst.bad_constant};
  const auto rep = certify_template(inst.system, inst.spec, ControlTemplate(inst.horizon, bad), inst.q, g);
  CHECK_FALSE(rep.passed);
  REQUIRE(rep.witnesses.size() == 2);
  CHECK(rep.witnesses[0].kind == "immersion");
  CHECK(rep.witnesses[0].mu == doctest::Approx(1.0));
  CHECK(rep.witnesses[0].margin < 1e-12);
  CHECK(rep.witnesses[1].kind == "injectivity");
  CHECK(rep.witnesses[1].xb.size() == 2);
  // The witness pair differs only in the unobservable coordinate.
  CHECK(rep.witnesses[1].xa[0] == rep.witnesses[1].xb[0]);
}

TEST_CASE("a single-point box makes injectivity vacuous") {
  const auto inst = builtin_system("linear2d");
  Box pt;
  pt.lo = Vector::Constant(2, 0.5);
  pt.hi = pt.lo;
  const auto spec = CompactSpec::make(inst.system, pt, pt);
  const auto rep = certify_template(inst.system, spec, ControlTemplate::constant(1, 1.0), 1, GridParams{});
  CHECK(std::isinf(rep.rho1));
  CHECK(rep.passed == (rep.rho2 > 0.0));
  CHECK(rep.x_samples == 1);
  CHECK(to_json(rep)["rho1"].is_null());
  CHECK(to_json(rep)["rho1_vacuous"] == true);
}

TEST_CASE("certification configuration errors") {
  const auto inst = builtin_system("bilinear_unobservable");
  const auto tmpl = ControlTemplate(inst.horizon, inst.template_coeffs);
  GridParams coarse;
  coarse.x_points = 2;
  CHECK_THROWS_AS(certify_template(inst.system, inst.spec, tmpl, 2, coarse), ConfigError);
  CHECK_THROWS_AS(certify_template(inst.system, inst.spec, tmpl, 0, GridParams{}), ConfigError);
  CHECK_THROWS_AS(certify_template(inst.system, inst.spec, tmpl, kMaxJetOrder + 1, GridParams{}), CapabilityError);
}

TEST_CASE("certification margins shrink under nested refinement") {
  const auto inst = builtin_system("bilinear_unobservable");
  Matrix c(1, 3);
  c << 1.0, 0.6, -0.4;
  const ControlTemplate tmpl(inst.horizon, c);
  GridParams coarse;
  coarse.x_points = 6;
  coarse.t_points = 3;
  coarse.mu_points = 3;
  GridParams fine = coarse;
  fine.x_points = 11;
  fine.t_points = 5;
  fine.mu_points = 5;
  const auto a = certify_template(inst.system, inst.spec, tmpl, 2, coarse);
  const auto b = certify_template(inst.system, inst.spec, tmpl, 2, fine);
  CHECK(b.rho2 <= a.rho2);
  CHECK(b.rho1 <= a.rho1);
  CHECK((a.passed || !b.passed));
}

TEST_CASE("certification is independent of the thread count") {
  const auto inst = builtin_system("bilinear_unobservable");
  const ControlTemplate tmpl(inst.horizon, inst.template_coeffs);
  GridParams g;
  const auto one = certify_template(inst.system, inst.spec, tmpl, 2, g);
  g.threads = 4;
  const auto four = certify_template(inst.system, inst.spec, tmpl, 2, g);
  CHECK(to_json(one).dump() == to_json(four).dump());
}

TEST_CASE("template search") {
  SUBCASE("a certified base is returned unchanged") {
    const auto inst = builtin_system("linear2d");
    const auto base = ControlTemplate::constant(1, 1.0);
    for (int attempts : {1, 100}) {
      const auto res = search_template(inst.system, inst.spec, base, 1, GridParams{}, SearchParams{2, attempts});
      CHECK(res.found);
      CHECK(res.attempt == 0);
      CHECK(res.tmpl.coeffs() == base.coeffs());
      CHECK(res.tmpl.certified_order == 1);
    }
  }
  SUBCASE("the unobservable benchmark needs a non-constant template") {
    const auto inst = builtin_system("bilinear_unobservable");
    GridParams g;
    g.extra_mu = {*inst.bad_constant};
    const auto base = ControlTemplate::constant(1, inst.horizon);
    const auto res = search_template(inst.system, inst.spec, base, inst.q, g, SearchParams{});
    REQUIRE(res.found);
    CHECK(res.attempt == 1);  // seed 0
    CHECK(res.tmpl.degree() == 2);
    CHECK(res.tmpl.value(0.0) == vec({1}));
    CHECK(res.report.passed);
    const auto again = search_template(inst.system, inst.spec, base, inst.q, g, SearchParams{});
    CHECK(again.tmpl.coeffs() == res.tmpl.coeffs());
  }
  SUBCASE("failure reports the best candidate") {
    const auto inst = builtin_system("bilinear_unobservable");
    GridParams g;
    g.extra_mu = {*inst.bad_constant};
    const auto res = search_template(inst.system, inst.spec, ControlTemplate::constant(1, inst.horizon), inst.q, g,
                                     SearchParams{2, 1});
    CHECK_FALSE(res.found);
    CHECK(res.attempt == 0);
    CHECK_FALSE(res.report.passed);
  }
}

TEST_CASE("certification report JSON layout") {
  const auto inst = builtin_system("linear2d");
  const auto rep = certify_template(inst.system, inst.spec, ControlTemplate::constant(1, 1.0), 1, GridParams{});
  const auto j = to_json(rep);
  for (const char* key : {"passed", "rho1", "rho2", "eta", "grid", "witnesses", "seed", "q"}) CHECK(j.contains(key));
  CHECK(j["grid"]["x"] == 121);
  CHECK(j["grid"]["R"] == 2);
}
