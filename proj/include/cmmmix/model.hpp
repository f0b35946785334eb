#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmmmix/data.hpp"
#include "cmmmix/gower.hpp"
#include "cmmmix/random.hpp"

namespace cmmmix {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Hyperpriors {
  double a_alpha = 0.5;
  double b_alpha = 0.5;
  double a_tau = 3.0;
  double b_tau = 1.5;
  double tau2_max = 6.0;  ///< +inf disables the truncation
  double nu = 4.0;
  double a_s = 4.0;
  Eigen::MatrixXd b_s;  ///< P x P
  double h = 0.75;
  double v = 2.25;
  /// Dirichlet concentrations, one vector per random nominal variable.
  std::vector<std::vector<double>> dirichlet;
  /// Interior cutoffs gamma_1..gamma_{k-1}, one vector per random ordinal.
  std::vector<std::vector<double>> cutoffs;
  int truncation = 50;  ///< N
  DistanceSpec distance;
};

/// Equally spaced interior cutoffs on [-3, 3] (a single cutoff at 0 for k = 2).
std::vector<double> default_cutoffs(int levels);

/// Defaults for a dataset: gamma(0.5, 0.5) on alpha, flat Dirichlets,
/// v = 1.5^2 and the variance-targeting choices b_tau = (a_tau-1)v/3,
/// h = v/3, B_S = (nu-P-1)/(3 a_S) v I with a_tau = 3, nu = a_S = P + 2.
/// Without `distance`, fixed variables get equal weights and d* is set so
/// that on average 20% of the other rows are neighbors.
Hyperpriors default_hyperpriors(const MixedDataset& data, int truncation = 50,
                                std::optional<DistanceSpec> distance = std::nullopt);

/// Throws InvalidHyperpriors.
void validate_hyperpriors(const Hyperpriors& hyper, const Layout& layout);

nlohmann::json hyperpriors_to_json(const Hyperpriors& hyper);
Hyperpriors hyperpriors_from_json(const nlohmann::json& j);

/// Everything the sampler treats as fixed: data, design, hyperpriors.
class Model {
 public:
  Model(MixedDataset data, Design design, Hyperpriors hyper);

  const MixedDataset& data() const { return data_; }
  const Design& design() const { return design_; }
  const Hyperpriors& hyper() const { return hyper_; }
  const Layout& layout() const { return data_.layout(); }
  const Eigen::MatrixXd& fixed() const { return fixed_; }

  int n() const { return static_cast<int>(data_.rows()); }
  int q() const { return layout().q(); }
  int p_o() const { return layout().p_o(); }
  int p_c() const { return layout().p_c(); }
  int p_n() const { return layout().p_n(); }
  int P() const { return layout().latent_dim(); }
  int k() const { return static_cast<int>(design_.size()); }
  int N() const { return hyper_.truncation; }

  /// Schema column of latent coordinate r (ordinal block first).
  int latent_column(int r) const;
  /// Number of levels of ordinal latent coordinate r < p_o.
  int ordinal_levels(int r) const;
  /// (gamma_{l-1}, gamma_l] for level l of ordinal coordinate r.
  std::pair<double, double> interval(int r, int level) const;
  /// Level whose interval contains w.
  int level_of(int r, double w) const;
  int nominal_column(int j) const { return layout().random_nominal[static_cast<std::size_t>(j)]; }
  int nominal_levels(int j) const;

  /// Whether the design reads nominal random variable j.
  bool design_uses_nominal(int j) const { return design_uses_nominal_[static_cast<std::size_t>(j)]; }

  /// Support of fixed coordinate l for the location prior: [lower, upper],
  /// integer levels when categorical.
  const DistanceVariable& location_support(int l) const {
    return hyper_.distance.variables[static_cast<std::size_t>(l)];
  }

 private:
  MixedDataset data_;
  Design design_;
  Hyperpriors hyper_;
  Eigen::MatrixXd fixed_;
  std::vector<bool> design_uses_nominal_;
};

struct ModelState {
  Eigen::VectorXd sticks;                          ///< V, N
  Eigen::VectorXd log1m_sticks;                    ///< log(1 - V), exact where V rounds to 1
  Eigen::MatrixXd locations;                       ///< Gamma, N x q
  std::vector<Eigen::MatrixXd> beta;               ///< N of k x P
  std::vector<Eigen::MatrixXd> sigma;              ///< N of P x P
  std::vector<std::vector<Eigen::VectorXd>> psi;   ///< N x p_n simplexes
  std::vector<int> alloc;                          ///< H, 0-based
  Eigen::MatrixXd latent;                          ///< n x P: (W, Z)
  RowMatrix completed;                             ///< n x cols, model scale, no NaN
  Eigen::MatrixXd beta0;                           ///< k x P
  Eigen::VectorXd tau2;                            ///< k
  Eigen::MatrixXd scale;                           ///< S, P x P
  double alpha = 1.0;
  std::int64_t sweep = 0;

  // Derived from the above; refreshed by refresh_caches.
  RowMatrix design;                      ///< n x k
  std::vector<std::vector<int>> eta;     ///< sorted neighborhoods

  std::span<const double> row(int i) const {
    return {completed.row(i).data(), static_cast<std::size_t>(completed.cols())};
  }
};

/// Recomputes the design matrix and every neighborhood.
void refresh_caches(const Model& model, ModelState& state);
void refresh_design_row(const Model& model, ModelState& state, int i);
void refresh_neighborhoods(const Model& model, ModelState& state);

/// Local stick-breaking weights over an ordered index set: the h-th weight
/// is V_{eta_h} prod_{j<h}(1 - V_{eta_j}), the last one the remainder.
/// Without `log1m_sticks`, log(1 - V) is computed from V.
std::vector<double> local_weights(std::span<const int> eta, const Eigen::VectorXd& sticks,
                                  const Eigen::VectorXd& log1m_sticks = {});
std::vector<double> local_log_weights(std::span<const int> eta, const Eigen::VectorXd& sticks,
                                      const Eigen::VectorXd& log1m_sticks = {});

/// Stores a stick drawn on the log scale, V clamped inside (0, 1).
void set_stick(ModelState& state, int h, std::pair<double, double> log_draw);

/// Prior draw of one location row.
void draw_location_prior(const Model& model, Rng& rng, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out);

/// Initial state: locations from the prior (redrawn, up to 1000 times, until
/// every row has a neighbor), sticks from beta(1, E[alpha]), hyperparameters
/// at prior means, atoms from the base distributions, allocations uniform
/// over neighborhoods, missing cells hot-decked from observed values of the
/// same column and latents from the marginal kernel truncated to the levels.
ModelState init_state(const Model& model, std::uint64_t seed);

enum class ViolationKind {
  AllocationOutsideNeighborhood,
  LatentIntervalViolation,
  LatentMismatch,
  ObservedCellModified,
  UnresolvedCell,
  PsiNotSimplex,
  SigmaNotPD,
  ScaleNotPD,
  StickOutOfRange,
  Tau2OutOfRange,
  AlphaNonPositive,
  LocationOutOfSupport,
  ShapeMismatch,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string detail;
};

std::vector<Violation> validate(const ModelState& state, const Model& model);

/// Versioned little-endian binary snapshot ("CMMXSTAT").
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path, const Model& model);
void write_state(std::ostream& out, const ModelState& state);
ModelState read_state(std::istream& in, const Model& model);

}  // namespace cmmmix
