#include "cmmmix/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "cmmmix/error.hpp"

namespace cmmmix {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

Role parse_role(const std::string& s) {
  if (s == "random") return Role::Random;
  if (s == "fixed") return Role::Fixed;
  throw Error(ErrorCode::InvalidSchema, "unknown role '" + s + "'");
}

Kind parse_kind(const std::string& s) {
  if (s == "ordinal") return Kind::Ordinal;
  if (s == "nominal") return Kind::Nominal;
  if (s == "continuous") return Kind::Continuous;
  throw Error(ErrorCode::InvalidSchema, "unknown kind '" + s + "'");
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::Random ? "random" : "fixed"; }

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::Ordinal: return "ordinal";
    case Kind::Nominal: return "nominal";
    case Kind::Continuous: return "continuous";
  }
  return "continuous";
}

void validate_schema(const Schema& schema) {
  if (schema.empty()) throw Error(ErrorCode::InvalidSchema, "schema has no columns");
  std::set<std::string> names;
  for (const auto& v : schema) {
    if (v.name.empty()) throw Error(ErrorCode::InvalidSchema, "column with empty name");
    if (!names.insert(v.name).second)
      throw Error(ErrorCode::InvalidSchema, "duplicate column '" + v.name + "'");
    if (v.categorical() && v.levels < 2)
      throw Error(ErrorCode::InvalidSchema, "column '" + v.name + "' needs at least 2 levels");
  }
}

Schema schema_from_json(const nlohmann::json& j) {
  const nlohmann::json& cols = j.is_array() ? j : j.at("columns");
  Schema schema;
  for (const auto& c : cols) {
    VariableSpec v;
    v.name = c.at("name").get<std::string>();
    v.role = parse_role(c.at("role").get<std::string>());
    v.kind = parse_kind(c.at("kind").get<std::string>());
    if (v.categorical()) v.levels = c.at("levels").get<int>();
    schema.push_back(std::move(v));
  }
  validate_schema(schema);
  return schema;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& v : schema) {
    nlohmann::json c{{"name", v.name},
                     {"role", std::string(to_string(v.role))},
                     {"kind", std::string(to_string(v.kind))}};
    if (v.categorical()) c["levels"] = v.levels;
    cols.push_back(std::move(c));
  }
  return nlohmann::json{{"columns", cols}};
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open schema " + path.string());
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSchema, path.string() + ": " + e.what());
  }
}

Layout make_layout(const Schema& schema) {
  Layout layout;
  for (int c = 0; c < static_cast<int>(schema.size()); ++c) {
    const auto& v = schema[static_cast<std::size_t>(c)];
    if (v.role == Role::Fixed) {
      layout.fixed.push_back(c);
      continue;
    }
    switch (v.kind) {
      case Kind::Ordinal: layout.random_ordinal.push_back(c); break;
      case Kind::Continuous: layout.random_continuous.push_back(c); break;
      case Kind::Nominal: layout.random_nominal.push_back(c); break;
    }
  }
  return layout;
}

// ---------------------------------------------------------------------------

MixedDataset::MixedDataset(Schema schema, Eigen::MatrixXd values, bool standardize)
    : schema_(std::move(schema)), values_(std::move(values)) {
  validate_schema(schema_);
  layout_ = make_layout(schema_);
  transform_.assign(schema_.size(), Standardization{});
  validate();
  if (!standardize) return;
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].kind != Kind::Continuous) continue;
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      const double v = values_(i, static_cast<Eigen::Index>(c));
      if (std::isnan(v)) continue;
      sum += v;
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      const double v = values_(i, static_cast<Eigen::Index>(c));
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
    // Constant columns are centered only.
    if (!(sd > 0.0)) sd = 1.0;
    transform_[c] = {mean, sd};
    values_.col(static_cast<Eigen::Index>(c)) =
        (values_.col(static_cast<Eigen::Index>(c)).array() - mean) / sd;
  }
}

MixedDataset::MixedDataset(Schema schema, Eigen::MatrixXd values,
                           std::vector<Standardization> transform)
    : schema_(std::move(schema)), values_(std::move(values)), transform_(std::move(transform)) {
  validate_schema(schema_);
  layout_ = make_layout(schema_);
  if (transform_.size() != schema_.size())
    throw Error(ErrorCode::InvalidSchema, "standardization count does not match schema");
  validate();
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].kind != Kind::Continuous) continue;
    const auto& t = transform_[c];
    values_.col(static_cast<Eigen::Index>(c)) =
        (values_.col(static_cast<Eigen::Index>(c)).array() - t.mean) / t.sd;
  }
}

void MixedDataset::validate() const {
  if (static_cast<std::size_t>(values_.cols()) != schema_.size())
    throw Error(ErrorCode::InvalidSchema, "value matrix width does not match schema");
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const auto& v = schema_[c];
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      const double x = values_(i, static_cast<Eigen::Index>(c));
      if (std::isnan(x)) {
        if (v.role == Role::Fixed)
          throw Error(ErrorCode::MissingFixedValue,
                      "fixed column '" + v.name + "' missing at row " + std::to_string(i + 1));
        continue;
      }
      if (!std::isfinite(x))
        throw Error(ErrorCode::NonNumericContinuous,
                    "non-finite value in '" + v.name + "' at row " + std::to_string(i + 1));
      if (v.categorical() && (x != std::floor(x) || x < 1 || x > v.levels))
        throw Error(ErrorCode::OutOfRangeLevel,
                    "'" + v.name + "' value " + format_double(x) + " not in 1.." +
                        std::to_string(v.levels) + " at row " + std::to_string(i + 1));
    }
  }
}

bool MixedDataset::missing(std::size_t row, std::size_t col) const {
  return std::isnan(values_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)));
}

std::size_t MixedDataset::missing_count() const {
  return static_cast<std::size_t>(values_.array().isNaN().count());
}

double MixedDataset::to_original(std::size_t col, double model_value) const {
  if (schema_[col].kind != Kind::Continuous) return model_value;
  return model_value * transform_[col].sd + transform_[col].mean;
}

double MixedDataset::to_model(std::size_t col, double original_value) const {
  if (schema_[col].kind != Kind::Continuous) return original_value;
  return (original_value - transform_[col].mean) / transform_[col].sd;
}

int MixedDataset::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < schema_.size(); ++c)
    if (schema_[c].name == name) return static_cast<int>(c);
  return -1;
}

Eigen::MatrixXd MixedDataset::fixed_matrix() const {
  Eigen::MatrixXd f(values_.rows(), layout_.q());
  for (int l = 0; l < layout_.q(); ++l) f.col(l) = values_.col(layout_.fixed[static_cast<std::size_t>(l)]);
  return f;
}

Eigen::MatrixXd MixedDataset::original_values() const {
  Eigen::MatrixXd out = values_;
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].kind != Kind::Continuous) continue;
    out.col(static_cast<Eigen::Index>(c)) =
        out.col(static_cast<Eigen::Index>(c)).array() * transform_[c].sd + transform_[c].mean;
  }
  return out;
}

// ---------------------------------------------------------------------------

bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (;;) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) {
      if (quoted) throw Error(ErrorCode::Io, "unterminated quoted CSV field");
      fields.push_back(std::move(field));
      return any || !fields.back().empty() || fields.size() > 1;
    }
    any = true;
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get();
      fields.push_back(std::move(field));
      return true;
    } else {
      field += c;
    }
  }
}

MixedDataset parse_csv(std::istream& in, const Schema& schema) {
  validate_schema(schema);
  std::vector<std::string> header;
  if (!read_csv_record(in, header)) throw Error(ErrorCode::Io, "empty CSV input");
  std::vector<int> to_schema(header.size(), -1);
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t h = 0; h < header.size(); ++h) {
    const std::string name = trim(header[h]);
    const auto it = std::find_if(schema.begin(), schema.end(),
                                 [&](const VariableSpec& v) { return v.name == name; });
    if (it == schema.end()) throw Error(ErrorCode::UnknownColumn, "column '" + name + "'");
    const auto c = static_cast<std::size_t>(it - schema.begin());
    if (seen[c]) throw Error(ErrorCode::InvalidSchema, "duplicate header '" + name + "'");
    seen[c] = true;
    to_schema[h] = static_cast<int>(c);
  }
  for (std::size_t c = 0; c < schema.size(); ++c)
    if (!seen[c]) throw Error(ErrorCode::MissingColumn, "column '" + schema[c].name + "'");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> fields;
  std::size_t line = 1;
  while (read_csv_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
    if (fields.size() != header.size())
      throw Error(ErrorCode::Io, "row " + std::to_string(line) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(header.size()));
    std::vector<double> row(schema.size(), kNaN);
    for (std::size_t h = 0; h < fields.size(); ++h) {
      const auto c = static_cast<std::size_t>(to_schema[h]);
      const std::string cell = trim(fields[h]);
      if (cell.empty() || cell == "NA") continue;
      double v = 0.0;
      if (!parse_double(cell, v)) {
        if (schema[c].kind == Kind::Continuous)
          throw Error(ErrorCode::NonNumericContinuous,
                      "'" + cell + "' in column '" + schema[c].name + "' at line " +
                          std::to_string(line));
        throw Error(ErrorCode::OutOfRangeLevel, "'" + cell + "' in column '" + schema[c].name +
                                                    "' at line " + std::to_string(line));
      }
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < schema.size(); ++c)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return MixedDataset(schema, std::move(values), true);
}

MixedDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_csv(in, schema);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const Schema& schema, const Eigen::MatrixXd& values) {
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out << ',';
    out << quote_csv(schema[c].name);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      const double v = values(i, c);
      if (std::isnan(v)) {
        out << "NA";
      } else if (schema[static_cast<std::size_t>(c)].categorical()) {
        out << static_cast<long long>(std::llround(v));
      } else {
        out << format_double(v);
      }
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Schema& schema,
               const Eigen::MatrixXd& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_csv(out, schema, values);
}

// ---------------------------------------------------------------------------

std::string DesignTerm::label() const {
  switch (type) {
    case Type::Intercept: return "(Intercept)";
    case Type::Dummy: return variable + "=" + std::to_string(level);
    case Type::Linear: return variable;
    case Type::Interaction: {
      std::string s;
      for (std::size_t f = 0; f < factors.size(); ++f) {
        if (f) s += ':';
        s += factors[f].label();
      }
      return s;
    }
  }
  return {};
}

namespace {

nlohmann::json term_to_json(const DesignTerm& t) {
  switch (t.type) {
    case DesignTerm::Type::Intercept: return {{"type", "intercept"}};
    case DesignTerm::Type::Dummy:
      return {{"type", "dummy"}, {"variable", t.variable}, {"level", t.level}};
    case DesignTerm::Type::Linear: return {{"type", "linear"}, {"variable", t.variable}};
    case DesignTerm::Type::Interaction: {
      nlohmann::json f = nlohmann::json::array();
      for (const auto& x : t.factors) f.push_back(term_to_json(x));
      return {{"type", "interaction"}, {"factors", f}};
    }
  }
  return {};
}

DesignTerm term_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "intercept") return DesignTerm::intercept();
  if (type == "dummy")
    return DesignTerm::dummy(j.at("variable").get<std::string>(), j.at("level").get<int>());
  if (type == "linear") return DesignTerm::linear(j.at("variable").get<std::string>());
  if (type == "interaction") {
    DesignTerm t;
    t.type = DesignTerm::Type::Interaction;
    for (const auto& f : j.at("factors")) t.factors.push_back(term_from_json(f));
    return t;
  }
  throw Error(ErrorCode::InvalidDesign, "unknown term type '" + type + "'");
}

}  // namespace

nlohmann::json design_to_json(const DesignConfig& config) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : config.terms) terms.push_back(term_to_json(t));
  return nlohmann::json{{"terms", terms}};
}

DesignConfig design_from_json(const nlohmann::json& j) {
  DesignConfig config;
  for (const auto& t : j.at("terms")) config.terms.push_back(term_from_json(t));
  return config;
}

DesignConfig default_design(const Schema& schema, bool ordinal_fixed_linear) {
  DesignConfig config;
  config.terms.push_back(DesignTerm::intercept());
  for (const auto& v : schema) {
    const bool dummies = (v.role == Role::Random && v.kind == Kind::Nominal) ||
                         (v.role == Role::Fixed && v.kind == Kind::Nominal) ||
                         (v.role == Role::Fixed && v.kind == Kind::Ordinal && !ordinal_fixed_linear);
    if (dummies) {
      for (int l = 2; l <= v.levels; ++l) config.terms.push_back(DesignTerm::dummy(v.name, l));
    } else if (v.role == Role::Fixed) {
      config.terms.push_back(DesignTerm::linear(v.name));
    }
  }
  return config;
}

Design::Design(const Schema& schema, DesignConfig config) : config_(std::move(config)) {
  if (config_.terms.empty() || config_.terms.front().type != DesignTerm::Type::Intercept)
    throw Error(ErrorCode::InvalidDesign, "first design term must be the intercept");

  auto resolve = [&](const DesignTerm& t) -> Factor {
    const auto it = std::find_if(schema.begin(), schema.end(),
                                 [&](const VariableSpec& v) { return v.name == t.variable; });
    if (it == schema.end())
      throw Error(ErrorCode::InvalidDesign, "term references unknown variable '" + t.variable + "'");
    const VariableSpec& v = *it;
    const int column = static_cast<int>(it - schema.begin());
    const bool response = v.role == Role::Random && v.kind != Kind::Nominal;
    if (response)
      throw Error(ErrorCode::InvalidDesign,
                  "'" + v.name + "' is a random ordinal/continuous response, not a covariate");
    if (t.type == DesignTerm::Type::Dummy) {
      if (!v.categorical() || t.level < 1 || t.level > v.levels)
        throw Error(ErrorCode::InvalidDesign, "invalid dummy term " + t.label());
    } else if (v.kind == Kind::Nominal) {
      throw Error(ErrorCode::InvalidDesign, "nominal '" + v.name + "' cannot enter linearly");
    }
    return {t.type, column, t.level};
  };

  std::function<void(const DesignTerm&, Compiled&)> flatten = [&](const DesignTerm& t,
                                                                  Compiled& out) {
    switch (t.type) {
      case DesignTerm::Type::Intercept:
        throw Error(ErrorCode::InvalidDesign, "intercept cannot appear inside an interaction");
      case DesignTerm::Type::Dummy:
      case DesignTerm::Type::Linear: out.factors.push_back(resolve(t)); break;
      case DesignTerm::Type::Interaction:
        if (t.factors.size() < 2)
          throw Error(ErrorCode::InvalidDesign, "interaction needs at least two factors");
        for (const auto& f : t.factors) flatten(f, out);
        break;
    }
  };

  compiled_.reserve(config_.terms.size());
  for (std::size_t k = 0; k < config_.terms.size(); ++k) {
    const auto& t = config_.terms[k];
    Compiled c;
    if (k > 0) {
      if (t.type == DesignTerm::Type::Intercept)
        throw Error(ErrorCode::InvalidDesign, "intercept may only appear first");
      flatten(t, c);
    }
    for (const auto& f : c.factors) referenced_.push_back(f.column);
    compiled_.push_back(std::move(c));
  }
  std::sort(referenced_.begin(), referenced_.end());
  referenced_.erase(std::unique(referenced_.begin(), referenced_.end()), referenced_.end());
}

void Design::evaluate(std::span<const double> row, std::span<double> out) const {
  for (std::size_t k = 0; k < compiled_.size(); ++k) {
    double v = 1.0;
    for (const auto& f : compiled_[k].factors) {
      const double x = row[static_cast<std::size_t>(f.column)];
      if (std::isnan(x))
        throw Error(ErrorCode::UnresolvedMissing,
                    "design term " + config_.terms[k].label() + " reads a missing value");
      v *= f.type == DesignTerm::Type::Dummy ? (x == f.level ? 1.0 : 0.0) : x;
    }
    out[k] = v;
  }
}

Eigen::VectorXd Design::evaluate(std::span<const double> row) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  evaluate(row, std::span<double>(out.data(), size()));
  return out;
}

bool Design::references(int column) const {
  return std::binary_search(referenced_.begin(), referenced_.end(), column);
}

Eigen::VectorXd build_design_vector(std::span<const double> row, const Design& design) {
  return design.evaluate(row);
}

}  // namespace cmmmix
