#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmmmix/data.hpp"

namespace cmmmix {

/// A shared variable for the synthetic population. Categorical values come
/// from cutting a one-factor Gaussian copula, A* = loading * U + sqrt(1 -
/// loading^2) E, at the quantiles of `probs`.
struct SharedVariable {
  std::string name;
  Kind kind = Kind::Ordinal;  ///< Ordinal or Nominal
  std::vector<double> probs;  ///< marginal level probabilities
  double loading = 0.0;

  int levels() const { return static_cast<int>(probs.size()); }
};

/// Z = D(a) coef + noise_sd * e.
struct NormalGenerator {
  std::string name = "z";
  DesignConfig terms;
  Eigen::VectorXd coef;
  double noise_sd = 1.0;
};

/// Y = level of D(a) coef + e, e ~ N(0, 1), cut at `cutoffs`.
struct ProbitGenerator {
  std::string name = "y";
  DesignConfig terms;
  Eigen::VectorXd coef;
  std::vector<double> cutoffs;

  int levels() const { return static_cast<int>(cutoffs.size()) + 1; }
};

/// Pr(X = c) proportional to exp(D(a) coef.row(c - 2)) for c >= 2, 1 for c = 1.
struct LogitGenerator {
  std::string name = "x";
  DesignConfig terms;
  Eigen::MatrixXd coef;  ///< (levels - 1) x terms

  int levels() const { return static_cast<int>(coef.rows()) + 1; }
};

struct GenConfig {
  std::vector<SharedVariable> shared;
  NormalGenerator z;
  ProbitGenerator y;
  LogitGenerator x;
  std::uint64_t seed = 1;
};

/// Six ordinal (6, 5, 5, 7, 5, 5 levels) and five nominal (4, 2, 2, 2, 2)
/// shared variables; Z, Y (3 levels) and X (3 categories) driven mostly by o3
/// and n3.
GenConfig default_generator();
void validate_generator(const GenConfig& cfg);
nlohmann::json generator_to_json(const GenConfig& cfg);
GenConfig generator_from_json(const nlohmann::json& j);

/// The shared variables as fixed columns.
Schema shared_schema(const GenConfig& cfg);
/// Shared columns (fixed) followed by Z (continuous), Y (ordinal), X (nominal),
/// all random.
Schema fusion_schema(const GenConfig& cfg);

/// n rows of shared variables; row i uses stream (seed, sweep, Generate, i).
Eigen::MatrixXd draw_shared(const GenConfig& cfg, int n, std::uint64_t seed,
                            std::uint64_t sweep = 0);

double z_mean(const GenConfig& cfg, std::span<const double> shared_row);
std::vector<double> y_probabilities(const GenConfig& cfg, std::span<const double> shared_row);
std::vector<double> x_probabilities(const GenConfig& cfg, std::span<const double> shared_row);

/// Pr(target = target_level, shared = shared_level).
struct TrackedCell {
  std::string target;
  int target_level = 0;
  std::string shared;
  int shared_level = 0;
};

/// Every (X, A_j) and (Y, A_j) cell, X first, then by shared variable and level.
std::vector<TrackedCell> tracked_cells(const GenConfig& cfg);

/// Population cell probabilities: Pr(target | a) averaged over `samples`
/// fresh shared draws.
std::vector<double> population_cells(const GenConfig& cfg, int samples);

struct FusionReplicate {
  Schema schema;            ///< fusion_schema
  Eigen::MatrixXd values;   ///< complete, original scale
  std::vector<double> cells;  ///< tracked cells given the shared rows
};

/// Appends Z, Y and X, drawn independently given each shared row with
/// stream (cfg.seed, 0, Generate, i, 1).
FusionReplicate generate_fusion_replicate(const MixedDataset& shared, const GenConfig& cfg);

/// Names of the three blocks' variables.
struct FusionColumns {
  std::string x = "x";
  std::string y = "y";
  std::string z = "z";
};

/// Rows split into three consecutive blocks of floor(n/3), the remainder going
/// to the last: block 1 loses (X, Z), block 2 (X, Y), block 3 (Y, Z).
/// Throws TooFewRows when n < 3.
Eigen::MatrixXd blank_three_way(const Eigen::MatrixXd& values, const Schema& schema,
                                const FusionColumns& columns = {});

/// Nearest-neighbor hot deck: each missing target cell takes the value of a
/// donor drawn uniformly among the rows observing it at minimal Hamming
/// distance on `match_on`. Ties use stream (seed, 0, Matching, row, column).
/// Throws NoDonor when a target is observed nowhere.
Eigen::MatrixXd statistical_matching(const Eigen::MatrixXd& values, const Schema& schema,
                                     const std::vector<std::string>& match_on,
                                     const std::vector<std::string>& targets, std::uint64_t seed);

/// Distance-defining features for one conditional-model variant: either the
/// named shared variables or the `top` ones by normalized I^max.
struct CmmVariant {
  std::string label = "cmm";
  std::vector<std::string> features;
  int top = 2;
  double dstar = 0.125;
};

struct StudyConfig {
  GenConfig generator;
  int n = 600;
  int replications = 10;
  int completions = 5;
  bool oracle = true;
  bool joint = true;
  bool matching = true;
  std::vector<CmmVariant> variants;
  int truncation = 30;
  int iterations = 1500;
  int burn_in = 500;
  int population_samples = 200000;
  /// Model designs are the intercept plus dummies of every categorical
  /// variable; X's dummies are left out unless this is set.
  bool design_includes_x = false;
  std::vector<std::string> cmi_strata;
  int cmi_bins = 4;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 1;
};

StudyConfig default_study();
/// Throws InvalidStudyConfig.
void validate_study(const StudyConfig& cfg);
nlohmann::json study_to_json(const StudyConfig& cfg);
/// Missing keys take the defaults of default_study().
StudyConfig study_from_json(const nlohmann::json& j);

struct MethodSummary {
  std::string method;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_abs_error = 0.0;
  double mean_abs_error_se = 0.0;
  double q25_abs_error = 0.0;
  double q75_abs_error = 0.0;
  double cross_zero_rate = 0.0;  ///< cross-block coefficient CIs containing 0
  double cmi = 0.0;              ///< stratified I(X; Z | strata), averaged
};

struct ReplicationMetrics {
  int replication = 0;
  std::string method;
  double coverage = 0.0;
  double mean_abs_error = 0.0;
  double q25_abs_error = 0.0;
  double q75_abs_error = 0.0;
  double cmi = 0.0;
};

struct RegressionRow {
  int replication = 0;
  std::string method;
  std::string term;
  bool cross = false;  ///< an X or Y coefficient (truly zero)
  double truth = 0.0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct FusionReport {
  int replications = 0;
  int tracked_cells = 0;
  std::vector<MethodSummary> methods;
  std::vector<ReplicationMetrics> per_replication;
  std::vector<RegressionRow> regression;
};

/// Completed datasets for one method on one replication.
struct MethodOutput {
  std::string method;
  std::vector<Eigen::MatrixXd> completed;
};

/// Runs every configured method on replication r. The oracle's completed
/// datasets are the values before blanking. Replication seeds are
/// derive_seed(cfg.seed, Study, r).
std::vector<MethodOutput> run_fusion_replication(const StudyConfig& cfg, int r,
                                                 FusionReplicate* replicate = nullptr);

FusionReport run_fusion_study(const StudyConfig& cfg);

/// Cell estimates of one completed dataset, in tracked_cells order.
std::vector<double> cell_estimates(const Eigen::MatrixXd& completed, const Schema& schema,
                                   const std::vector<TrackedCell>& cells);

/// Plug-in I(X; Z | strata) with Z cut into `bins` equal-frequency bins:
/// sum over strata of (n_s / n) times the within-stratum MI.
double stratified_cmi(const Eigen::MatrixXd& completed, const Schema& schema,
                      const std::string& x, const std::string& z,
                      const std::vector<std::string>& strata, int bins);

struct OlsFit {
  std::vector<std::string> terms;
  Eigen::VectorXd coef;
  Eigen::VectorXd variance;  ///< diagonal of s^2 (D'D)^{-1}
  int df = 0;
};

/// Z on an intercept, X dummies, Y dummies and the non-intercept terms of the
/// Z generator.
OlsFit cross_block_regression(const Eigen::MatrixXd& completed, const Schema& schema,
                              const GenConfig& cfg);

/// One row per (method, metric): method,metric,value,mc_se.
void write_report_csv(std::ostream& out, const FusionReport& report);
void write_regression_csv(std::ostream& out, const FusionReport& report);
nlohmann::json report_to_json(const FusionReport& report);

}  // namespace cmmmix
