#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmmmix/linalg.hpp"
#include "cmmmix/model.hpp"
#include "cmmmix/random.hpp"

namespace cmmmix {

/// How the location Gamma_h is resampled.
///  Exact: the full conditional, which besides keeping every member within
///    d* accounts for the stick weights of rows whose neighborhood gains or
///    loses h.
///  MembersOnly: only the member constraint (uniform on the feasible set),
///    with empty components drawn from the prior.
enum class LocationUpdate { Exact, MembersOnly };

struct SamplerOptions {
  LocationUpdate location_update = LocationUpdate::Exact;
  bool permute_order = false;  ///< visit rows and components in a keyed random order
};

// Full-conditional laws. Each update draws from the law returned by the
// matching *_conditional function, which tests compare to the joint density.

struct NormalLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct WishartLaw {  ///< also used for the inverse-Wishart of Sigma_h
  double df = 0.0;
  Eigen::MatrixXd scale;
};

struct DirichletLaw {
  Eigen::VectorXd concentration;
};

struct CategoricalLaw {
  std::vector<int> support;
  std::vector<double> log_weights;  ///< unnormalized
};

struct BetaLaw {
  double a = 1.0;
  double b = 1.0;
};

struct GammaLaw {  ///< shape / rate, optionally restricted to [minimum, inf)
  double shape = 1.0;
  double rate = 1.0;
  double minimum = 0.0;
};

struct TruncatedNormalLaw {  ///< restricted to (lower, upper]
  double mean = 0.0;
  double sd = 1.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

/// One coordinate of a location. Categorical coordinates: `values` are the
/// levels with unnormalized `log_weights`. Continuous coordinates: `values`
/// are breakpoints b_0 < ... < b_m and log_weights[s] is the log density on
/// (b_s, b_{s+1}); -inf marks infeasible pieces.
struct LocationLaw {
  bool continuous = false;
  std::vector<double> values;
  std::vector<double> log_weights;

  double log_density(double x) const;  ///< unnormalized; -inf outside the support
};

/// Per-component quantities reused across rows within a sweep.
struct ComponentCache {
  std::vector<GaussianFactor> factor;                   ///< Sigma_h
  std::vector<std::vector<ConditionalWeights>> coord;   ///< [h][r]
  std::vector<std::vector<Eigen::VectorXd>> log_psi;    ///< [h][j]
};

ComponentCache build_component_cache(const Model& model, const ModelState& state);

/// Rows allocated to each component.
std::vector<std::vector<int>> component_members(const ModelState& state, int N);

TruncatedNormalLaw latent_conditional(const Model& model, const ModelState& state,
                                      const ComponentCache& cache, int i, int r);
CategoricalLaw nominal_conditional(const Model& model, const ModelState& state,
                                   const ComponentCache& cache, int i, int j);
CategoricalLaw allocation_conditional(const Model& model, const ModelState& state,
                                      const ComponentCache& cache, int i);
std::vector<BetaLaw> stick_conditionals(const Model& model, const ModelState& state);
LocationLaw location_conditional(const Model& model, const ModelState& state, int h, int l,
                                 const std::vector<int>& members, LocationUpdate mode);
NormalLaw beta_column_conditional(const Model& model, const ModelState& state, int h, int r,
                                  const std::vector<int>& members);
WishartLaw sigma_conditional(const Model& model, const ModelState& state, int h,
                             const std::vector<int>& members);  ///< inverse-Wishart
DirichletLaw psi_conditional(const Model& model, const ModelState& state, int h, int j,
                             const std::vector<int>& members);
GammaLaw alpha_conditional(const Model& model, const ModelState& state);
NormalLaw beta0_conditional(const Model& model, const ModelState& state, int m, int r);
/// Law of the precision 1/tau^2_m, restricted to [1/tau2_max, inf).
GammaLaw tau2_precision_conditional(const Model& model, const ModelState& state, int m);
WishartLaw scale_conditional(const Model& model, const ModelState& state);

// Updates. Each draws from its conditional with a stream keyed by
// (seed, state.sweep, tag, index).

void update_latents(const Model& model, ModelState& state, const ComponentCache& cache, int i,
                    std::uint64_t seed);
void impute_nominal(const Model& model, ModelState& state, const ComponentCache& cache, int i,
                    std::uint64_t seed);
void update_allocation(const Model& model, ModelState& state, const ComponentCache& cache, int i,
                       std::uint64_t seed);
void update_sticks(const Model& model, ModelState& state, std::uint64_t seed);
void update_locations(const Model& model, ModelState& state, std::uint64_t seed,
                      const SamplerOptions& options = {});
void update_location(const Model& model, ModelState& state, int h,
                     const std::vector<int>& members, std::uint64_t seed,
                     LocationUpdate mode);
void update_beta(const Model& model, ModelState& state, int h, const std::vector<int>& members,
                 std::uint64_t seed);
void update_sigma(const Model& model, ModelState& state, int h, const std::vector<int>& members,
                  std::uint64_t seed);
void update_psi(const Model& model, ModelState& state, int h, const std::vector<int>& members,
                std::uint64_t seed);
void update_alpha(const Model& model, ModelState& state, std::uint64_t seed);
void update_beta0(const Model& model, ModelState& state, std::uint64_t seed);
void update_tau2(const Model& model, ModelState& state, std::uint64_t seed);
void update_scale(const Model& model, ModelState& state, std::uint64_t seed);

/// One full pass: latents and imputations, allocations, sticks, locations,
/// atoms, then beta0, tau^2, S and alpha. Increments state.sweep first.
void gibbs_sweep(const Model& model, ModelState& state, std::uint64_t seed,
                 const SamplerOptions& options = {});

/// The same sweep for a global truncated stick-breaking mixture: every
/// component is available to every row and locations are prior draws.
void reference_dp_sweep(const Model& model, ModelState& state, std::uint64_t seed);

struct ChainConfig {
  int iterations = 2000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  int completions = 5;  ///< m
  SamplerOptions options;
  bool keep_rows = false;  ///< keep row-level arrays in snapshots
  std::optional<std::filesystem::path> checkpoint;  ///< written on abort and at the end
};

void validate_chain_config(const ChainConfig& cfg);

struct TraceRow {
  std::int64_t sweep = 0;
  double alpha = 0.0;
  Eigen::VectorXd tau2;
  int active = 0;  ///< components with at least one member
};

struct Draws {
  std::vector<ModelState> snapshots;
  std::vector<std::int64_t> snapshot_sweeps;
  std::vector<Eigen::MatrixXd> completed;  ///< original scale
  std::vector<std::int64_t> completion_sweeps;
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;
};

/// Sweeps at which completed datasets are emitted: m evenly spaced
/// post-burn-in sweeps ending at the last one.
std::vector<std::int64_t> completion_schedule(const ChainConfig& cfg);

Draws run_chain(const Model& model, const ChainConfig& cfg,
                const std::function<void(const ModelState&)>& on_sweep = {});

/// Independent chains seeded derive_seed(cfg.seed, Chain, c); results do not
/// depend on `threads`.
std::vector<Draws> run_chains(const Model& model, const ChainConfig& cfg, int chains,
                              int threads = 1);

/// Completed dataset on the original scale.
Eigen::MatrixXd completed_original(const Model& model, const ModelState& state);

/// Potential scale reduction factor over equal-length chains.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace cmmmix
