#include "lsgpr/linalg.hpp"

#include <cmath>

#include "lsgpr/error.hpp"

namespace lsgpr {

JitteredCholesky::JitteredCholesky(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ValidationError("Cholesky of a non-square matrix");
  if (a.rows() == 0) {
    llt_.compute(a);
    return;
  }
  if (!a.allFinite()) throw NumericalError("Cholesky of a matrix with non-finite entries");

  llt_.compute(a);
  if (llt_.info() == Eigen::Success) return;

  const double scale = std::abs(a.diagonal().mean());
  const double base = scale > 0.0 ? scale : 1.0;
  for (double rel = 1e-8; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    jitter_ = rel * base;
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter_;
    llt_.compute(shifted);
    if (llt_.info() == Eigen::Success) return;
  }
  throw NumericalError("Cholesky failed after maximum jitter");
}

Eigen::MatrixXd JitteredCholesky::inverse() const {
  const auto n = llt_.matrixLLT().rows();
  return llt_.solve(Eigen::MatrixXd::Identity(n, n));
}

double JitteredCholesky::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd JitteredCholesky::multiply_lower(const Eigen::VectorXd& v) const {
  return llt_.matrixL() * v;
}

}  // namespace lsgpr
