#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cmmmix {

/// Identifies which update a random stream belongs to. Streams are keyed by
/// (seed, sweep, tag, index) so that reordering inner loops or skipping an
/// update never shifts the numbers seen by any other update.
enum class StreamTag : std::uint64_t {
  Init = 1,
  Latent,
  Nominal,
  Allocation,
  Stick,
  Location,
  Beta,
  Sigma,
  Psi,
  Alpha,
  Beta0,
  Tau2,
  Scale,
  Order,
  Chain,
  Completion,
  Generate,
  Blank,
  Matching,
  Query,
  Study,
  Test,
};

/// xoshiro256** engine whose state is derived from a hashed key.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t sweep, StreamTag tag, std::uint64_t index,
      std::uint64_t sub = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();

 private:
  void seed_from(std::uint64_t key);
  std::uint64_t s_[4];
};

/// Derives a child seed; used to give chains and replications independent roots.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index);

double draw_normal(Rng& rng);
double draw_normal(Rng& rng, double mean, double sd);
double draw_gamma(Rng& rng, double shape, double rate);
double draw_beta(Rng& rng, double a, double b);
/// Beta(a, b) as (log V, log(1 - V)). Both stay exact where V itself rounds
/// to 0 or 1.
std::pair<double, double> draw_log_beta(Rng& rng, double a, double b);
Eigen::VectorXd draw_dirichlet(Rng& rng, std::span<const double> concentration);

/// Index drawn with probability proportional to exp(log_weights), evaluated
/// with max-subtraction.
std::size_t draw_categorical_log(Rng& rng, std::span<const double> log_weights);

/// Standard normal restricted to (lower, upper]; either bound may be infinite.
double draw_truncated_std_normal(Rng& rng, double lower, double upper);
double draw_truncated_normal(Rng& rng, double mean, double sd, double lower, double upper);

/// Gamma(shape, rate) restricted to [minimum, inf) by inverse CDF on the upper tail.
double draw_gamma_lower_truncated(Rng& rng, double shape, double rate, double minimum);

/// Wishart(df, scale) with density proportional to
/// |S|^{(df-p-1)/2} exp(-tr(scale^{-1} S)/2); mean df * scale.
Eigen::MatrixXd draw_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

/// Inverse-Wishart(df, scale) with density proportional to
/// |X|^{-(df+p+1)/2} exp(-tr(scale X^{-1})/2); mean scale / (df - p - 1).
Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

/// Draws mean + L z with L lower-triangular.
Eigen::VectorXd draw_mvnormal_chol(Rng& rng, const Eigen::VectorXd& mean,
                                   const Eigen::MatrixXd& lower);

}  // namespace cmmmix
