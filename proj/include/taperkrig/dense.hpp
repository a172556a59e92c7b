#pragma once

#include <span>

#include <Eigen/Dense>

#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"

namespace taperkrig {

// Full covariance matrix (nugget on the diagonal).
Eigen::MatrixXd dense_covariance(std::span<const Location> locations,
                                 const CovarianceModel& model);

// Dense Cholesky wrapper; the exact route for oracles, plain-Matern
// likelihoods and simulation at moderate n.
class DenseChol {
 public:
  // Throws NotPositiveDefiniteError if the decomposition fails.
  explicit DenseChol(const Eigen::MatrixXd& matrix);

  double logdet() const { return logdet_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }
  const Eigen::MatrixXd& matrix_l() const { return l_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd l_;
  double logdet_ = 0.0;
};

// Exact zero-mean Gaussian negative log-likelihood of z under the given
// covariance matrix: (logdet K + z' K^-1 z + n log 2 pi) / 2.
double dense_neg_loglik(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& z);

}  // namespace taperkrig
