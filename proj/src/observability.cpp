#include "tfl/observability.hpp"

#include "tfl/errors.hpp"

namespace tfl {

Matrix ConstantSignal::derivatives(double /*t*/, int order) const {
  Matrix d = Matrix::Zero(value_.size(), order + 1);
  d.col(0) = value_;
  return d;
}

InputJet scaled_input_jet(const InputSignal& signal, double t, double mu, const Matrix& R, int order) {
  return {R * (mu * signal.derivatives(t, order))};
}

namespace {

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite value");
}

int required_input_order(int q) { return std::max(q - 1, 0); }

void require_orthogonal(const Matrix& R) {
  const Matrix E = R.transpose() * R - Matrix::Identity(R.cols(), R.cols());
  if (R.rows() != R.cols() || E.cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("R must be orthogonal within 1e-10");
  }
}

}  // namespace

Vector hk(const SystemModel& sys, const Vector& x, const InputJet& sigma, int k) {
  const std::vector<double> xs(x.data(), x.data() + sys.n);
  const auto Y = output_jet<double>(sys, xs, sigma, k);
  Vector out(sys.m);
  for (int r = 0; r < sys.m; ++r) out[r] = Y[r][k];
  require_finite(out, "hk");
  return out;
}

ObservabilityStack calH(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q) {
  const std::vector<double> xs(x.data(), x.data() + sys.n);
  const auto Y = output_jet<double>(sys, xs, sigma, q);
  ObservabilityStack st;
  st.k = q;
  st.values.resize(sys.m * (q + 1));
  for (int j = 0; j <= q; ++j) {
    for (int r = 0; r < sys.m; ++r) st.values[j * sys.m + r] = Y[r][j];
  }
  require_finite(st.values, "calH");
  return st;
}

ObservabilityStack calH(const SystemModel& sys, const Vector& x, double t, const InputSignal& input, double mu,
                        const Matrix& R, int q) {
  check_jet_order(q);
  require_orthogonal(R);
  return calH(sys, x, scaled_input_jet(input, t, mu, R, required_input_order(q)), q);
}

StackWithJacobian calH_with_jacobian(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q) {
  std::vector<Dual> xs;
  xs.reserve(sys.n);
  for (int i = 0; i < sys.n; ++i) xs.push_back(Dual::variable(x[i], sys.n, i));
  const auto Y = output_jet<Dual>(sys, xs, sigma, q);
  StackWithJacobian out;
  out.values.resize(sys.m * (q + 1));
  out.jacobian.resize(sys.m * (q + 1), sys.n);
  for (int j = 0; j <= q; ++j) {
    for (int r = 0; r < sys.m; ++r) {
      const Dual& d = Y[r][j];
      out.values[j * sys.m + r] = d.value();
      for (int c = 0; c < sys.n; ++c) out.jacobian(j * sys.m + r, c) = d.d(c);
    }
  }
  require_finite(out.values, "calH");
  if (!out.jacobian.allFinite()) throw NumericalError("calH_jacobian: non-finite value");
  return out;
}

Matrix calH_jacobian(const SystemModel& sys, const Vector& x, const InputJet& sigma, int q) {
  return calH_with_jacobian(sys, x, sigma, q).jacobian;
}

Matrix calH_jacobian(const SystemModel& sys, const Vector& x, double t, const InputSignal& input, double mu,
                     const Matrix& R, int q) {
  check_jet_order(q);
  require_orthogonal(R);
  return calH_jacobian(sys, x, scaled_input_jet(input, t, mu, R, required_input_order(q)), q);
}

}  // namespace tfl
