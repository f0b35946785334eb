#include "cmmmix/linalg.hpp"

#include <cmath>
#include <numbers>

namespace cmmmix {

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, ErrorCode on_failure) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const Eigen::MatrixXd jittered =
      a + 1e-10 * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  llt.compute(jittered);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  throw Error(on_failure, "matrix is not positive definite after jitter");
}

bool is_symmetric_pd(const Eigen::MatrixXd& a, double symmetry_tol) {
  if (a.rows() != a.cols()) return false;
  if (!a.allFinite()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd l = cholesky_lower(a, ErrorCode::NonPDScale);
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  Eigen::MatrixXd inv = linv.transpose() * linv;
  return 0.5 * (inv + inv.transpose());
}

GaussianFactor::GaussianFactor(const Eigen::MatrixXd& covariance)
    : lower_(cholesky_lower(covariance, ErrorCode::SingularPrecision)) {
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

double GaussianFactor::log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const {
  return log_density_residual(x - mean);
}

double GaussianFactor::log_density_residual(const Eigen::VectorXd& residual) const {
  const Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>().solve(residual);
  const double p = static_cast<double>(residual.size());
  return -0.5 * (p * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

ConditionalWeights conditional_weights(const Eigen::MatrixXd& cov, int j) {
  const Eigen::Index p = cov.rows();
  ConditionalWeights out{Eigen::VectorXd::Zero(p), cov(j, j)};
  if (p == 1) return out;
  std::vector<Eigen::Index> rest;
  rest.reserve(static_cast<std::size_t>(p - 1));
  for (Eigen::Index r = 0; r < p; ++r)
    if (r != j) rest.push_back(r);
  Eigen::MatrixXd srr(p - 1, p - 1);
  Eigen::VectorXd sjr(p - 1);
  for (Eigen::Index a = 0; a < p - 1; ++a) {
    sjr(a) = cov(j, rest[a]);
    for (Eigen::Index b = 0; b < p - 1; ++b) srr(a, b) = cov(rest[a], rest[b]);
  }
  const Eigen::VectorXd w = srr.llt().solve(sjr);
  for (Eigen::Index a = 0; a < p - 1; ++a) out.weights(rest[a]) = w(a);
  out.variance = cov(j, j) - sjr.dot(w);
  return out;
}

ConditionalNormal condition_on_rest(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                    const Eigen::MatrixXd& cov, int j) {
  const ConditionalWeights cw = conditional_weights(cov, j);
  double m = mean(j);
  for (Eigen::Index r = 0; r < x.size(); ++r)
    if (r != j) m += cw.weights(r) * (x(r) - mean(r));
  return {m, cw.variance};
}

}  // namespace cmmmix
