#pragma once

// Output-derivative maps.
//
// For a state x and an input jet sigma = (u, u', ..., u^(k-1)) at some instant,
// H_k(x, sigma) is the k-th time derivative of y = h(X(x, t, u)) at that
// instant. It is computed by Taylor-mode propagation: the state jet is grown
// one order at a time through x^(j+1) = d^j/dt^j f(x, u), then composed with h.
// The stacked map calH_q = (H_0, ..., H_q) and its state Jacobian (through
// Jet<Dual>) are built from the same routine.

#include <vector>

#include "tfl/jet.hpp"
#include "tfl/system.hpp"

namespace tfl {

/// Raw derivatives of a p-dimensional input at one instant: column k is u^(k).
struct InputJet {
  Matrix d;  // p x (order + 1)

  int order() const { return static_cast<int>(d.cols()) - 1; }
  int channels() const { return static_cast<int>(d.rows()); }

  static InputJet zero(int p, int order) { return {Matrix::Zero(p, order + 1)}; }
};

/// A smooth input with exact derivative access.
class InputSignal {
 public:
  virtual ~InputSignal() = default;
  virtual int channels() const = 0;
  /// p x (order + 1) matrix of raw derivatives at t.
  virtual Matrix derivatives(double t, int order) const = 0;
};

/// Input held at a fixed value (all derivatives zero).
class ConstantSignal final : public InputSignal {
 public:
  explicit ConstantSignal(Vector value) : value_(std::move(value)) {}
  int channels() const override { return static_cast<int>(value_.size()); }
  Matrix derivatives(double t, int order) const override;

 private:
  Vector value_;
};

/// Jet of mu * R * signal at t, up to `order`.
InputJet scaled_input_jet(const InputSignal& signal, double t, double mu, const Matrix& R, int order);

/// Stacked (H_0, ..., H_k) evaluated on the input jet.
struct ObservabilityStack {
  int k = 0;
  Vector values;  // m (k+1); block j = H_j

  Vector block(int j, int m) const { return values.segment(j * m, m); }
};

/// H_k(x, sigma). Requires sigma.order() >= k - 1.
Vector hk(const SystemModel& sys, const Vector& x, const InputJet& sigma, int k);

ObservabilityStack calH(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q);
ObservabilityStack calH(const SystemModel& sys, const Vector& x, double t, const InputSignal& input, double mu,
                        const Matrix& R, int q);

/// Jacobian of x -> calH_q(x) by forward sensitivities (m(q+1) x n).
Matrix calH_jacobian(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q);
Matrix calH_jacobian(const SystemModel& sys, const Vector& x, double t, const InputSignal& input, double mu,
                     const Matrix& R, int q);

/// calH_q and its Jacobian from one propagation.
struct StackWithJacobian {
  Vector values;
  Matrix jacobian;
};
StackWithJacobian calH_with_jacobian(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q);

/// State jet X(x, ., u) of order K at the expansion instant: entry i is the jet of x_i.
template <class S>
std::vector<Jet<S>> propagate_state_jet(const SystemModel& sys, const std::vector<S>& x, const InputJet& sigma,
                                        int K) {
  check_jet_order(K);
  if (K >= 1 && sigma.order() < K - 1) {
    throw std::invalid_argument("input jet of order " + std::to_string(sigma.order()) + " too short for order " +
                                std::to_string(K));
  }
  const S& proto = x.front();
  std::vector<Jet<S>> X(sys.n, Jet<S>(K));
  for (int i = 0; i < sys.n; ++i) X[i][0] = x[i];
  std::vector<Jet<S>> U(sys.p, Jet<S>(K));
  for (int c = 0; c < sys.p; ++c) {
    for (int j = 0; j <= std::min(K, sigma.order()); ++j) U[c][j] = constant_like(proto, sigma.d(c, j));
  }
  std::vector<Jet<S>> Xk(sys.n), Uk(sys.p), F(sys.n);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < sys.n; ++i) Xk[i] = X[i].truncated(k);
    for (int c = 0; c < sys.p; ++c) Uk[c] = U[c].truncated(k);
    sys.flow<Jet<S>>(Xk, Uk, F);
    for (int i = 0; i < sys.n; ++i) X[i][k + 1] = F[i][k];
  }
  return X;
}

/// Output jet (one Jet per output channel); coefficient j of channel r is [H_j]_r.
template <class S>
std::vector<Jet<S>> output_jet(const SystemModel& sys, const std::vector<S>& x, const InputJet& sigma, int K) {
  const auto X = propagate_state_jet(sys, x, sigma, K);
  std::vector<Jet<S>> Y(sys.m);
  sys.output<Jet<S>>(X, Y);
  return Y;
}

}  // namespace tfl
