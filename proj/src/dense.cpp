#include "taperkrig/dense.hpp"

#include <cmath>

#include "taperkrig/errors.hpp"

namespace taperkrig {

Eigen::MatrixXd dense_covariance(std::span<const Location> locations,
                                 const CovarianceModel& model) {
  model.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd k(n, n);
  const double diag = model.params.sill + model.params.nugget;
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = diag;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = model.value(distance(locations[i], locations[j]));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

DenseChol::DenseChol(const Eigen::MatrixXd& matrix) : llt_(matrix) {
  if (llt_.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("dense Cholesky failed: matrix is not positive-definite",
                                   -1, -1);
  }
  l_ = llt_.matrixL();
  for (Eigen::Index i = 0; i < l_.rows(); ++i) logdet_ += 2.0 * std::log(l_(i, i));
}

double dense_neg_loglik(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& z) {
  const DenseChol chol(covariance);
  const double quad = z.dot(chol.solve(z));
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  return 0.5 * (chol.logdet() + quad + static_cast<double>(z.size()) * kLog2Pi);
}

}  // namespace taperkrig
