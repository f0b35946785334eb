#pragma once

#include <Eigen/Dense>

#include "cmmmix/error.hpp"

namespace cmmmix {

/// Lower Cholesky factor. Retries once with 1e-10 * I added to the diagonal;
/// throws Error(code) on a second failure.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a,
                               ErrorCode on_failure = ErrorCode::SingularPrecision);

bool is_symmetric_pd(const Eigen::MatrixXd& a, double symmetry_tol = 1e-9);

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a);

/// Cached factorization for repeated multivariate-normal log densities.
class GaussianFactor {
 public:
  GaussianFactor() = default;
  explicit GaussianFactor(const Eigen::MatrixXd& covariance);

  double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const;
  double log_density_residual(const Eigen::VectorXd& residual) const;

  const Eigen::MatrixXd& lower() const { return lower_; }
  double log_det() const { return log_det_; }

 private:
  Eigen::MatrixXd lower_;
  double log_det_ = 0.0;
};

/// Conditional law of coordinate j of N(mean, cov) given all other coordinates.
struct ConditionalNormal {
  double mean;
  double variance;
};
ConditionalNormal condition_on_rest(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                    const Eigen::MatrixXd& cov, int j);

/// Regression weights Sigma_{j,-j} Sigma_{-j,-j}^{-1} (length p, zero at j) and
/// the conditional variance of coordinate j.
struct ConditionalWeights {
  Eigen::VectorXd weights;
  double variance;
};
ConditionalWeights conditional_weights(const Eigen::MatrixXd& cov, int j);

}  // namespace cmmmix
