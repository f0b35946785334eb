#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmmmix/model.hpp"

namespace cmmmix {

/// Conditioning arguments. All values are on the original data scale.
struct QueryPoint {
  std::vector<double> f;                ///< fixed variables, schema order
  std::vector<std::optional<int>> x;    ///< nominal random variables; empty = all unspecified
  std::vector<double> latent;           ///< (W, Z) target, ordinal block first; may be empty
};

/// Component indices available at f with their local stick-breaking weights.
struct LocalMixture {
  std::vector<int> components;
  std::vector<double> weights;
};

LocalMixture local_mixture(const Model& model, const ModelState& state, std::span<const double> f);

/// Design vector at (x, f) with x fully specified.
Eigen::VectorXd design_at(const Model& model, std::span<const double> f, std::span<const int> x);

/// Sum over local components of p_h N((w, z); D beta_h, Sigma_h) prod_j psi_{h, x_j}.
/// Continuous targets are on the original scale, so the density carries the
/// Jacobian of the standardization.
double joint_conditional_density(const Model& model, const ModelState& state, const QueryPoint& q);

/// Pr(X = x | f) for a full nominal vector.
double pr_x_given_f(const Model& model, const ModelState& state, std::span<const double> f,
                    std::span<const int> x);

struct Estimate {
  double value = 0.0;
  double se = 0.0;  ///< Monte Carlo standard error; 0 when exact
};

/// Pr(Y = y | x, f) for a combination of ordinal levels. Exact for one
/// ordinal variable, 64-node Gauss-Legendre quadrature for two, antithetic
/// Monte Carlo with `mc_samples` draws per component beyond that.
Estimate pr_y_given_xf(const Model& model, const ModelState& state, std::span<const double> f,
                       std::span<const int> x, std::span<const int> y, int mc_samples = 100000,
                       std::uint64_t seed = 1);

/// Averages `functional` over the unspecified nominal coordinates of `x`
/// with the weights Pr(X_j = v | f) = sum_l p_l(f) psi^{(j)}_{l, v}, taken
/// independently across coordinates.
double marginalize_nominal(const Model& model, const ModelState& state, std::span<const double> f,
                           const std::vector<std::optional<int>>& x,
                           const std::function<double(std::span<const int>)>& functional);

enum class FunctionalType { JointDensity, PrX, PrY };

/// A functional evaluated per posterior draw.
struct FunctionalSpec {
  FunctionalType type = FunctionalType::PrX;
  QueryPoint point;
  std::vector<int> y;  ///< PrY only
  int mc_samples = 100000;
  std::uint64_t seed = 1;
  std::string label;
};

/// Evaluates the functional, marginalizing unspecified nominal coordinates.
double evaluate_functional(const Model& model, const ModelState& state, const FunctionalSpec& spec);

/// {"type": "pr_x" | "pr_y" | "density", "f": {name: value}, "x": {name: level},
///  "y": {name: level}, "latent": {name: value}, "mc_samples": n, "label": s}
FunctionalSpec functional_from_json(const nlohmann::json& j, const Model& model);
nlohmann::json functional_to_json(const FunctionalSpec& spec, const Model& model);

/// Every full nominal combination (or ordinal combination) in lexicographic order.
std::vector<std::vector<int>> level_combinations(std::span<const int> levels);

struct PosteriorSummary {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.9;
  std::vector<double> values;
};

/// Hyndman-Fan type 7 sample quantile.
double quantile_type7(std::vector<double> values, double p);

/// Equal-tailed interval at `level` over per-draw values. Throws TooFewDraws
/// below 10 draws.
PosteriorSummary summarize_over_draws(const std::vector<ModelState>& draws,
                                      const std::function<double(const ModelState&)>& functional,
                                      double level = 0.9);
PosteriorSummary summarize_values(std::vector<double> values, double level = 0.9);

struct RubinOptions {
  double level = 0.95;
  /// Barnard-Rubin small-sample degrees of freedom given the complete-data
  /// degrees of freedom; off by default (classic formula).
  std::optional<double> complete_df;
};

struct RubinResult {
  double estimate = 0.0;
  double within = 0.0;   ///< U-bar
  double between = 0.0;  ///< B
  double total = 0.0;    ///< T
  double df = 0.0;       ///< +inf when B = 0
  double lower = 0.0;
  double upper = 0.0;
};

/// Multiple-imputation combining rules. Throws InvalidQuery when m < 2 or the
/// inputs differ in length.
RubinResult rubin_combine(std::span<const double> estimates, std::span<const double> within,
                          const RubinOptions& options = {});

}  // namespace cmmmix
