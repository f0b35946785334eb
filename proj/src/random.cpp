#include "cmmmix/random.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cmmmix/error.hpp"
#include "cmmmix/linalg.hpp"

namespace cmmmix {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730950488;

std::uint64_t splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  std::uint64_t x = h ^ (v + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2));
  return splitmix(x);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// Upper tail of the standard normal.
double upper_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }
double upper_tail_inverse(double q) { return kSqrt2 * boost::math::erfc_inv(2.0 * q); }

// Exponential-proposal rejection for N(0,1) restricted to [a, b], a >= 0.
double tail_rejection(Rng& rng, double a, double b) {
  const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  if (std::isfinite(b) && b - a < 1.0 / lambda) {
    // Narrow interval: uniform proposal, acceptance exp(-(x^2 - a^2)/2).
    for (;;) {
      const double x = a + (b - a) * rng.uniform();
      if (std::log(rng.uniform()) <= -0.5 * (x * x - a * a)) return x;
    }
  }
  for (;;) {
    const double x = a - std::log(rng.uniform()) / lambda;
    if (x > b) continue;
    const double d = x - lambda;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return x;
  }
}

// N(0,1) on (a, b] with 0 <= a < b.
double upper_region(Rng& rng, double a, double b) {
  if (a > 5.0) return tail_rejection(rng, a, b);
  const double qa = upper_tail(a);
  const double qb = std::isfinite(b) ? upper_tail(b) : 0.0;
  if (qa - qb < 1e-300) return tail_rejection(rng, a, b);
  const double u = qb + (qa - qb) * rng.uniform();
  return std::clamp(upper_tail_inverse(u), a, b);
}

// log of a Gamma(shape, 1) variate; stable for small shapes.
double draw_log_gamma(Rng& rng, double shape) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  return std::log(g(rng)) + std::log(rng.uniform()) / shape;
}

}  // namespace

Rng::Rng(std::uint64_t seed) { seed_from(mix(0x5EEDULL, seed)); }

Rng::Rng(std::uint64_t seed, std::uint64_t sweep, StreamTag tag, std::uint64_t index,
         std::uint64_t sub) {
  std::uint64_t h = mix(0x5EEDULL, seed);
  h = mix(h, sweep);
  h = mix(h, static_cast<std::uint64_t>(tag));
  h = mix(h, index);
  h = mix(h, sub);
  seed_from(h);
}

void Rng::seed_from(std::uint64_t key) {
  for (auto& s : s_) s = splitmix(key);
}

Rng::result_type Rng::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return ((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  Rng rng(seed, 0, tag, index);
  return rng();
}

double draw_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

double draw_normal(Rng& rng, double mean, double sd) { return mean + sd * draw_normal(rng); }

double draw_gamma(Rng& rng, double shape, double rate) {
  return std::exp(draw_log_gamma(rng, shape)) / rate;
}

std::pair<double, double> draw_log_beta(Rng& rng, double a, double b) {
  const double la = draw_log_gamma(rng, a);
  const double lb = draw_log_gamma(rng, b);
  const double m = std::max(la, lb);
  const double lse = m + std::log(std::exp(la - m) + std::exp(lb - m));
  return {la - lse, lb - lse};
}

double draw_beta(Rng& rng, double a, double b) {
  // Keep strictly inside (0, 1) so log(V) and log(1 - V) stay finite.
  return std::clamp(std::exp(draw_log_beta(rng, a, b).first), 1e-300, 1.0 - 0x1.0p-53);
}

Eigen::VectorXd draw_dirichlet(Rng& rng, std::span<const double> concentration) {
  const auto d = static_cast<Eigen::Index>(concentration.size());
  Eigen::VectorXd logs(d);
  for (Eigen::Index l = 0; l < d; ++l) logs(l) = draw_log_gamma(rng, concentration[l]);
  const double m = logs.maxCoeff();
  Eigen::VectorXd out = (logs.array() - m).exp().matrix();
  out /= out.sum();
  return out;
}

std::size_t draw_categorical_log(Rng& rng, std::span<const double> log_weights) {
  if (log_weights.empty()) throw Error(ErrorCode::EmptyNeighborhood, "no categories to draw from");
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(m)) {
    throw Error(ErrorCode::EmptyNeighborhood, "all categorical weights are zero or non-finite");
  }
  std::vector<double> cumulative(log_weights.size());
  double total = 0.0;
  for (std::size_t l = 0; l < log_weights.size(); ++l) {
    total += std::exp(log_weights[l] - m);
    cumulative[l] = total;
  }
  const double u = rng.uniform() * total;
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               log_weights.size() - 1);
}

double draw_truncated_std_normal(Rng& rng, double lower, double upper) {
  if (!(lower < upper)) {
    throw Error(ErrorCode::EmptyInterval, "truncation interval is empty");
  }
  if (lower == -kInf && upper == kInf) return draw_normal(rng);
  if (lower >= 0.0) return upper_region(rng, lower, upper);
  if (upper <= 0.0) return -upper_region(rng, -upper, -lower);
  // Interval straddles zero, so its mass is at least min(Phi(b), 1 - Phi(a)) - 1/2 > 0.
  const double pa = 0.5 * std::erfc(-lower / kSqrt2);
  const double pb = 0.5 * std::erfc(-upper / kSqrt2);
  const double u = pa + (pb - pa) * rng.uniform();
  const double x = -kSqrt2 * boost::math::erfc_inv(2.0 * u);
  return std::clamp(x, lower, upper);
}

double draw_truncated_normal(Rng& rng, double mean, double sd, double lower, double upper) {
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  return mean + sd * draw_truncated_std_normal(rng, a, b);
}

double draw_gamma_lower_truncated(Rng& rng, double shape, double rate, double minimum) {
  if (minimum <= 0.0) return draw_gamma(rng, shape, rate);
  const double q0 = boost::math::gamma_q(shape, rate * minimum);
  if (q0 > 1e-300) {
    const double u = q0 * rng.uniform();
    const double x = boost::math::gamma_q_inv(shape, u) / rate;
    return std::max(x, minimum);
  }
  // Far tail: shifted exponential proposal dominating the gamma tail.
  const double slope = shape > 1.0 ? rate - (shape - 1.0) / minimum : rate;
  const double proposal_rate = slope > 0.0 ? slope : rate;
  for (;;) {
    const double x = minimum - std::log(rng.uniform()) / proposal_rate;
    const double log_accept =
        (shape - 1.0) * std::log(x / minimum) - (rate - proposal_rate) * (x - minimum);
    if (std::log(rng.uniform()) <= log_accept) return x;
  }
}

Eigen::MatrixXd draw_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index p = scale.rows();
  const Eigen::MatrixXd l = cholesky_lower(scale, ErrorCode::NonPDScale);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(draw_gamma(rng, 0.5 * (df - static_cast<double>(i)), 0.5));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = draw_normal(rng);
  }
  const Eigen::MatrixXd la = l * a;
  Eigen::MatrixXd w = la * la.transpose();
  return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::MatrixXd w = draw_wishart(rng, df, spd_inverse(scale));
  Eigen::MatrixXd x = spd_inverse(w);
  return 0.5 * (x + x.transpose());
}

Eigen::VectorXd draw_mvnormal_chol(Rng& rng, const Eigen::VectorXd& mean,
                                   const Eigen::MatrixXd& lower) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = draw_normal(rng);
  return mean + lower.triangularView<Eigen::Lower>() * z;
}

}  // namespace cmmmix
