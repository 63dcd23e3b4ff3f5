#pragma once

// Truncated Taylor jets and forward-mode dual numbers.
//
// A Jet<S> of order K stores the raw time derivatives (c_0, c_1, ..., c_K) of a
// scalar signal at an expansion point; they are NOT divided by k!. All
// arithmetic below is therefore written with binomial (Leibniz) weights.
//
// The scalar type S is double, Dual, or anything else providing + - * / with
// itself and with double. Code that must run on all of them (system models,
// the saturation map) is written against the free functions in this header.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "tfl/errors.hpp"

namespace tfl {

/// Highest derivative order a jet can carry.
inline constexpr int kMaxJetOrder = 8;
/// Highest state dimension supported by forward-mode sensitivities.
inline constexpr int kMaxStateDim = 8;

namespace detail {

constexpr std::array<std::array<double, kMaxJetOrder + 1>, kMaxJetOrder + 1> make_binomials() {
  std::array<std::array<double, kMaxJetOrder + 1>, kMaxJetOrder + 1> b{};
  for (int k = 0; k <= kMaxJetOrder; ++k) {
    b[k][0] = 1.0;
    for (int j = 1; j <= k; ++j) {
      b[k][j] = b[k - 1][j - 1] + (j < k ? b[k - 1][j] : 0.0);
    }
  }
  return b;
}

inline constexpr auto kBinomial = make_binomials();

}  // namespace detail

inline double binomial(int k, int j) { return detail::kBinomial[k][j]; }

inline void check_jet_order(int order) {
  if (order < 0 || order > kMaxJetOrder) {
    throw CapabilityError("jet order " + std::to_string(order) + " outside [0, " +
                          std::to_string(kMaxJetOrder) + "]");
  }
}

// ---------------------------------------------------------------------------
// Dual numbers: value plus gradient with respect to up to kMaxStateDim seeds.
// A Dual with dim() == 0 behaves as a constant.
// ---------------------------------------------------------------------------
class Dual {
 public:
  Dual() = default;
  Dual(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(double value, int dim, int index) {
    if (dim > kMaxStateDim) {
      throw CapabilityError("sensitivity dimension " + std::to_string(dim) + " exceeds " +
                            std::to_string(kMaxStateDim));
    }
    Dual d(value);
    d.dim_ = dim;
    d.grad_[index] = 1.0;
    return d;
  }

  double value() const { return value_; }
  double d(int i) const { return i < dim_ ? grad_[i] : 0.0; }
  int dim() const { return dim_; }

  Dual& operator+=(const Dual& o) {
    value_ += o.value_;
    widen(o.dim_);
    for (int i = 0; i < o.dim_; ++i) grad_[i] += o.grad_[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    value_ -= o.value_;
    widen(o.dim_);
    for (int i = 0; i < o.dim_; ++i) grad_[i] -= o.grad_[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    const int dim = std::max(dim_, o.dim_);
    for (int i = 0; i < dim; ++i) grad_[i] = grad_[i] * o.value_ + value_ * o.grad_[i];
    dim_ = dim;
    value_ *= o.value_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.value_;
    const double q = value_ * inv;
    const int dim = std::max(dim_, o.dim_);
    for (int i = 0; i < dim; ++i) grad_[i] = (grad_[i] - q * o.grad_[i]) * inv;
    dim_ = dim;
    value_ = q;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend Dual operator+(Dual a, double b) { a.value_ += b; return a; }
  friend Dual operator+(double b, Dual a) { a.value_ += b; return a; }
  friend Dual operator-(Dual a, double b) { a.value_ -= b; return a; }
  friend Dual operator-(double b, const Dual& a) { return Dual(b) - a; }
  friend Dual operator*(Dual a, double b) { return a.scaled(b); }
  friend Dual operator*(double b, Dual a) { return a.scaled(b); }
  friend Dual operator/(Dual a, double b) { return a.scaled(1.0 / b); }
  friend Dual operator-(Dual a) { return a.scaled(-1.0); }

  // Chain rule helper: returns g(value) with derivative slope * grad.
  Dual chain(double g, double slope) const {
    Dual r(g);
    r.dim_ = dim_;
    for (int i = 0; i < dim_; ++i) r.grad_[i] = slope * grad_[i];
    return r;
  }

 private:
  void widen(int dim) {
    for (int i = dim_; i < dim; ++i) grad_[i] = 0.0;
    dim_ = std::max(dim_, dim);
  }
  Dual& scaled(double s) {
    value_ *= s;
    for (int i = 0; i < dim_; ++i) grad_[i] *= s;
    return *this;
  }

  double value_ = 0.0;
  int dim_ = 0;
  std::array<double, kMaxStateDim> grad_{};
};

inline Dual sin(const Dual& a) { return a.chain(std::sin(a.value()), std::cos(a.value())); }
inline Dual cos(const Dual& a) { return a.chain(std::cos(a.value()), -std::sin(a.value())); }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.value());
  return a.chain(e, e);
}
inline Dual sqrt(const Dual& a) {
  const double r = std::sqrt(a.value());
  return a.chain(r, 0.5 / r);
}

// ---------------------------------------------------------------------------
// Jets
// ---------------------------------------------------------------------------
template <class S>
class Jet {
 public:
  Jet() = default;
  explicit Jet(int order) : order_(order) { check_jet_order(order); }

  int order() const { return order_; }
  S& operator[](int k) { return c_[k]; }
  const S& operator[](int k) const { return c_[k]; }

  /// Same signal with derivatives above `order` dropped.
  Jet truncated(int order) const {
    Jet r(std::min(order, order_));
    for (int k = 0; k <= r.order_; ++k) r.c_[k] = c_[k];
    return r;
  }

  Jet& operator+=(const Jet& o) {
    order_ = std::min(order_, o.order_);
    for (int k = 0; k <= order_; ++k) c_[k] += o.c_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    order_ = std::min(order_, o.order_);
    for (int k = 0; k <= order_; ++k) c_[k] -= o.c_[k];
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (int k = 0; k <= a.order_; ++k) a.c_[k] = -a.c_[k];
    return a;
  }
  friend Jet operator+(Jet a, double b) { a.c_[0] = a.c_[0] + b; return a; }
  friend Jet operator+(double b, Jet a) { a.c_[0] = a.c_[0] + b; return a; }
  friend Jet operator-(Jet a, double b) { a.c_[0] = a.c_[0] - b; return a; }
  friend Jet operator-(double b, const Jet& a) { return -a + b; }
  friend Jet operator*(Jet a, double b) {
    for (int k = 0; k <= a.order_; ++k) a.c_[k] = a.c_[k] * b;
    return a;
  }
  friend Jet operator*(double b, Jet a) { return a * b; }
  friend Jet operator/(Jet a, double b) { return a * (1.0 / b); }

  // Leibniz rule: (ab)^(k) = sum_j C(k,j) a^(j) b^(k-j).
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order_, b.order_));
    for (int k = 0; k <= r.order_; ++k) {
      S acc = a.c_[0] * b.c_[k];
      for (int j = 1; j <= k; ++j) acc += binomial(k, j) * (a.c_[j] * b.c_[k - j]);
      r.c_[k] = acc;
    }
    return r;
  }

  // From a = q b: q^(k) = (a^(k) - sum_{j<k} C(k,j) q^(j) b^(k-j)) / b^(0).
  friend Jet operator/(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order_, b.order_));
    for (int k = 0; k <= r.order_; ++k) {
      S acc = a.c_[k];
      for (int j = 0; j < k; ++j) acc -= binomial(k, j) * (r.c_[j] * b.c_[k - j]);
      r.c_[k] = acc / b.c_[0];
    }
    return r;
  }

  friend Jet operator/(double b, const Jet& a) {
    Jet num(a.order_);
    for (int k = 0; k <= a.order_; ++k) num.c_[k] = a.c_[k] * 0.0;
    num.c_[0] = num.c_[0] + b;
    return num / a;
  }

  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

 private:
  int order_ = 0;
  std::array<S, kMaxJetOrder + 1> c_{};
};

// g = exp(f): g' = g f'  =>  g^(k) = sum_{j<k} C(k-1,j) g^(j) f^(k-j).
template <class S>
Jet<S> exp(const Jet<S>& f) {
  using std::exp;
  Jet<S> g(f.order());
  g[0] = exp(f[0]);
  for (int k = 1; k <= f.order(); ++k) {
    S acc = g[0] * f[k];
    for (int j = 1; j < k; ++j) acc += binomial(k - 1, j) * (g[j] * f[k - j]);
    g[k] = acc;
  }
  return g;
}

namespace detail {

// Coupled recurrence s' = c f', c' = -s f'.
template <class S>
void sin_cos(const Jet<S>& f, Jet<S>& s, Jet<S>& c) {
  using std::cos;
  using std::sin;
  s = Jet<S>(f.order());
  c = Jet<S>(f.order());
  s[0] = sin(f[0]);
  c[0] = cos(f[0]);
  for (int k = 1; k <= f.order(); ++k) {
    S as = c[0] * f[k];
    S ac = s[0] * f[k];
    for (int j = 1; j < k; ++j) {
      const double w = binomial(k - 1, j);
      as += w * (c[j] * f[k - j]);
      ac += w * (s[j] * f[k - j]);
    }
    s[k] = as;
    c[k] = -ac;
  }
}

}  // namespace detail

template <class S>
Jet<S> sin(const Jet<S>& f) {
  Jet<S> s, c;
  detail::sin_cos(f, s, c);
  return s;
}

template <class S>
Jet<S> cos(const Jet<S>& f) {
  Jet<S> s, c;
  detail::sin_cos(f, s, c);
  return c;
}

// g^2 = f: 2 g^(0) g^(k) = f^(k) - sum_{0<j<k} C(k,j) g^(j) g^(k-j).
template <class S>
Jet<S> sqrt(const Jet<S>& f) {
  using std::sqrt;
  Jet<S> g(f.order());
  g[0] = sqrt(f[0]);
  for (int k = 1; k <= f.order(); ++k) {
    S acc = f[k];
    for (int j = 1; j < k; ++j) acc -= binomial(k, j) * (g[j] * g[k - j]);
    g[k] = acc / (2.0 * g[0]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Generic scalar helpers
// ---------------------------------------------------------------------------
inline double constant_like(double /*proto*/, double c) { return c; }
inline Dual constant_like(const Dual& /*proto*/, double c) { return Dual(c); }
template <class S>
Jet<S> constant_like(const Jet<S>& proto, double c) {
  Jet<S> r(proto.order());
  r[0] = constant_like(proto[0], c);
  return r;
}

inline double value_of(double v) { return v; }
inline double value_of(const Dual& d) { return d.value(); }
template <class S>
double value_of(const Jet<S>& j) {
  return value_of(j[0]);
}

inline bool all_finite(double v) { return std::isfinite(v); }
inline bool all_finite(const Dual& d) {
  if (!std::isfinite(d.value())) return false;
  for (int i = 0; i < d.dim(); ++i) {
    if (!std::isfinite(d.d(i))) return false;
  }
  return true;
}
template <class S>
bool all_finite(const Jet<S>& j) {
  for (int k = 0; k <= j.order(); ++k) {
    if (!all_finite(j[k])) return false;
  }
  return true;
}

}  // namespace tfl
