#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace cmmmix {

enum class Role { Random, Fixed };
enum class Kind { Ordinal, Nominal, Continuous };

std::string_view to_string(Role role);
std::string_view to_string(Kind kind);

/// One column of the data: its role in the model and its type. `levels` is the
/// number of ordinal levels k or nominal categories d (>= 2); unused for
/// continuous columns. Categorical values are stored as 1..levels.
struct VariableSpec {
  std::string name;
  Role role = Role::Random;
  Kind kind = Kind::Continuous;
  int levels = 0;

  bool categorical() const { return kind != Kind::Continuous; }
  bool operator==(const VariableSpec&) const = default;
};

using Schema = std::vector<VariableSpec>;

void validate_schema(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;
};

/// Column-partition of a schema into the blocks the model works with.
struct Layout {
  std::vector<int> random_ordinal;
  std::vector<int> random_continuous;
  std::vector<int> random_nominal;
  std::vector<int> fixed;  ///< schema order

  int p_o() const { return static_cast<int>(random_ordinal.size()); }
  int p_c() const { return static_cast<int>(random_continuous.size()); }
  int p_n() const { return static_cast<int>(random_nominal.size()); }
  int q() const { return static_cast<int>(fixed.size()); }
  /// Dimension of the latent/continuous block (W, Z).
  int latent_dim() const { return p_o() + p_c(); }
};

Layout make_layout(const Schema& schema);

/// Typed data with missing cells stored as NaN. Continuous columns are held
/// on the standardized scale; the recorded (mean, sd) map back. Immutable
/// after construction.
class MixedDataset {
 public:
  MixedDataset() = default;

  /// `values` is rows x schema.size() with NaN for missing cells. When
  /// `standardize` is true every continuous column is centered and scaled by
  /// its observed mean and sample sd (divisor n-1); otherwise the values are
  /// taken as already on the model scale.
  MixedDataset(Schema schema, Eigen::MatrixXd values, bool standardize = true);

  /// Same, but with explicit standardization parameters (values are given on
  /// the original scale and are transformed with them).
  MixedDataset(Schema schema, Eigen::MatrixXd values, std::vector<Standardization> transform);

  const Schema& schema() const { return schema_; }
  const Layout& layout() const { return layout_; }
  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return schema_.size(); }

  double value(std::size_t row, std::size_t col) const { return values_(row, col); }
  bool missing(std::size_t row, std::size_t col) const;
  const Eigen::MatrixXd& values() const { return values_; }
  std::size_t missing_count() const;

  const Standardization& standardization(std::size_t col) const { return transform_[col]; }
  const std::vector<Standardization>& standardizations() const { return transform_; }
  double to_original(std::size_t col, double model_value) const;
  double to_model(std::size_t col, double original_value) const;

  int column_index(std::string_view name) const;  ///< -1 when absent

  /// rows x q matrix of fixed-variable values in schema order.
  Eigen::MatrixXd fixed_matrix() const;

  /// Copy on the original scale (continuous columns destandardized).
  Eigen::MatrixXd original_values() const;

 private:
  void validate() const;

  Schema schema_;
  Layout layout_;
  Eigen::MatrixXd values_;
  std::vector<Standardization> transform_;
};

/// Reads an RFC-4180 CSV whose header names the schema's columns (any order,
/// extra columns rejected). Missing cells are "" or "NA".
MixedDataset load_csv(const std::filesystem::path& path, const Schema& schema);
MixedDataset parse_csv(std::istream& in, const Schema& schema);

/// RFC-4180 record reader; returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields);

/// Writes values (original scale, NaN as "NA") under the schema's header.
void write_csv(std::ostream& out, const Schema& schema, const Eigen::MatrixXd& values);
void write_csv(const std::filesystem::path& path, const Schema& schema,
               const Eigen::MatrixXd& values);

std::string format_double(double v);

// ---------------------------------------------------------------------------
// Design vectors

struct DesignTerm {
  enum class Type { Intercept, Dummy, Linear, Interaction };

  Type type = Type::Intercept;
  std::string variable;             ///< Dummy / Linear
  int level = 0;                    ///< Dummy
  std::vector<DesignTerm> factors;  ///< Interaction (two or more)

  static DesignTerm intercept() { return {}; }
  static DesignTerm dummy(std::string var, int lvl) {
    return {Type::Dummy, std::move(var), lvl, {}};
  }
  static DesignTerm linear(std::string var) { return {Type::Linear, std::move(var), 0, {}}; }
  static DesignTerm interaction(DesignTerm a, DesignTerm b) {
    return {Type::Interaction, {}, 0, {std::move(a), std::move(b)}};
  }

  std::string label() const;
  bool operator==(const DesignTerm&) const = default;
};

struct DesignConfig {
  std::vector<DesignTerm> terms;

  std::size_t size() const { return terms.size(); }
};

nlohmann::json design_to_json(const DesignConfig& config);
DesignConfig design_from_json(const nlohmann::json& j);

/// Intercept, dummies (reference level 1 dropped) for every nominal random,
/// ordinal fixed and nominal fixed variable, linear terms for continuous fixed
/// variables. With `ordinal_fixed_linear` ordinal fixed variables enter linearly.
DesignConfig default_design(const Schema& schema, bool ordinal_fixed_linear = false);

/// A DesignConfig resolved against a schema.
class Design {
 public:
  Design() = default;
  Design(const Schema& schema, DesignConfig config);

  std::size_t size() const { return config_.terms.size(); }
  const DesignConfig& config() const { return config_; }

  /// Evaluates the design vector for a full schema-width row. Throws
  /// UnresolvedMissing when a referenced cell is NaN.
  void evaluate(std::span<const double> row, std::span<double> out) const;
  Eigen::VectorXd evaluate(std::span<const double> row) const;

  /// Whether any term reads the given schema column.
  bool references(int column) const;

 private:
  struct Factor {
    DesignTerm::Type type;
    int column;
    int level;
  };
  struct Compiled {
    std::vector<Factor> factors;  ///< empty product = intercept
  };

  DesignConfig config_;
  std::vector<Compiled> compiled_;
  std::vector<int> referenced_;
};

/// Free-function form of Design::evaluate.
Eigen::VectorXd build_design_vector(std::span<const double> row, const Design& design);

}  // namespace cmmmix
