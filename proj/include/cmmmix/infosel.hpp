#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmmmix/data.hpp"

namespace cmmmix {

/// Category codes 0.. for a column; -1 marks a missing cell. Categorical
/// columns keep their levels, continuous ones are cut into `bins`
/// equal-frequency intervals of the observed values.
std::vector<int> discretize(std::span<const double> column, Kind kind, int bins = 10);

/// Plug-in entropy (nats) of the observed categories of a column.
double entropy(std::span<const double> column, Kind kind = Kind::Nominal, int bins = 10);
double entropy_of_probs(std::span<const double> probs);

/// MI (nats) of a joint probability table (any nonnegative table; it is
/// normalized first).
double mi_from_table(const Eigen::MatrixXd& joint);

struct MiEstimate {
  double value = 0.0;
  bool degenerate = false;  ///< fewer than two distinct values on a side
};

/// Plug-in MI over rows where both cells are observed.
MiEstimate empirical_mi(std::span<const double> a, Kind kind_a, std::span<const double> b,
                        Kind kind_b, int bins = 10);

/// max_j of the given MI values (one per X column).
double i_max(std::span<const double> mi_with_each_x);

struct MrmrOptions {
  double t1 = 0.05;
  double t2 = 0.8;
  int bins = 10;
};

struct SelectionStep {
  int index = -1;  ///< position among the fixed variables
  double score = 0.0;
};

struct MiReport {
  std::vector<std::string> fixed_names;
  std::vector<std::string> nominal_names;
  Eigen::MatrixXd fx_mi;          ///< q x p_n, raw
  Eigen::MatrixXd fx_normalized;  ///< I(F_l, X_j) / H(X_j)
  Eigen::VectorXd imax;           ///< raw
  Eigen::VectorXd imax_normalized;
  Eigen::MatrixXd ff_mi;          ///< q x q, raw
  Eigen::MatrixXd ff_normalized;  ///< (l, l') -> I(F_l, F_l') / H(F_l')
  Eigen::VectorXd h_fixed;
  Eigen::VectorXd h_nominal;
  std::vector<SelectionStep> trace;
  std::string stop_reason;  ///< "relevancy", "redundancy" or "exhausted"
  std::vector<double> weights;
  std::vector<std::string> degenerate;  ///< names of degenerate columns
};

/// The selection itself, run on precomputed information quantities. Steps:
/// seed with argmax raw I^max; then, while neither stopping rule fires
/// (both checked before every addition), add argmax of
/// I^max_l - mean_{s in S} I(F_l, F_s). Ties go to the lowest index.
MiReport mrmr_from_information(const Eigen::MatrixXd& fx_mi, const Eigen::VectorXd& h_nominal,
                               const Eigen::MatrixXd& ff_mi, const Eigen::VectorXd& h_fixed,
                               const MrmrOptions& options = {});

/// Estimates every MI from the data (fixed columns vs nominal random
/// columns) and runs the selection.
MiReport mrmr_select(const MixedDataset& data, const MrmrOptions& options = {});

nlohmann::json to_json(const MiReport& report);
std::string format_table(const MiReport& report);

}  // namespace cmmmix
