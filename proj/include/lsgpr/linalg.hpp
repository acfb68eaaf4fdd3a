#pragma once

#include <Eigen/Dense>

namespace lsgpr {

// Cholesky factor of a symmetric matrix with escalating diagonal jitter.
// Jitter starts at 1e-8 * mean(diag) and grows x10 up to 1e-4 * mean(diag);
// the first attempt uses no jitter. Throws NumericalError when every level fails.
class JitteredCholesky {
 public:
  explicit JitteredCholesky(const Eigen::MatrixXd& a);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd inverse() const;
  double log_det() const;
  Eigen::MatrixXd lower() const { return llt_.matrixL(); }
  // L * v
  Eigen::VectorXd multiply_lower(const Eigen::VectorXd& v) const;
  double jitter() const { return jitter_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

}  // namespace lsgpr
