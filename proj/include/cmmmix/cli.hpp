#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmmmix/infosel.hpp"
#include "cmmmix/model.hpp"
#include "cmmmix/sampler.hpp"

namespace cmmmix {

/// Everything a fit needs. Relative paths are resolved against the directory
/// of the config file.
struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path schema;
  bool standardize = true;
  std::optional<DesignConfig> design;  ///< default_design when absent
  bool ordinal_fixed_linear = false;

  // Distance: explicit weights by fixed-variable name, mRMR selection, or the
  // equal-weight default. d* is given directly or solved from the average
  // neighbor fraction.
  std::optional<std::map<std::string, double>> weights;
  bool select_features = false;
  MrmrOptions selection;
  std::optional<double> dstar;
  std::optional<double> neighbor_fraction;

  nlohmann::json hyperpriors = nlohmann::json::object();  ///< overrides
  int truncation = 50;
  ChainConfig chain;
  int chains = 1;
  int threads = 1;
  std::filesystem::path output_dir = "cmmmix_out";
  double level = 0.9;  ///< credible level for query summaries
};

/// Throws InvalidConfig on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);
/// Checks what can be checked without reading the data: files exist, the
/// chain configuration is valid.
void validate_run_config(const RunConfig& cfg);

/// Data, design and resolved hyperpriors for a run configuration.
Model build_model(const RunConfig& cfg);

/// Snapshots on disk: "CMMXDRAW", u32 version, u64 count, then states.
void save_draws(const std::filesystem::path& path, const std::vector<ModelState>& draws);
std::vector<ModelState> load_draws(const std::filesystem::path& path, const Model& model);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 on success, 2 for configuration errors, 1 for anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cmmmix
