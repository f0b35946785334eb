#include "cmmmix/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "binary_io.hpp"
#include "cmmmix/error.hpp"
#include "cmmmix/fusion.hpp"
#include "cmmmix/gower.hpp"
#include "cmmmix/query.hpp"

namespace cmmmix {
namespace {

namespace fs = std::filesystem;
using detail::get_le;
using detail::put_le;

constexpr char kDrawsMagic[8] = {'C', 'M', 'M', 'X', 'D', 'R', 'A', 'W'};
constexpr std::uint32_t kDrawsVersion = 1;

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    bad_config("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() || base.empty() ? p : base / p;
}

void check_keys(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      bad_config("unknown key '" + key + "' in " + where);
}

bool config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidChainConfig:
    case ErrorCode::InvalidStudyConfig:
    case ErrorCode::InvalidHyperpriors:
    case ErrorCode::InvalidDistanceSpec:
    case ErrorCode::InvalidThreshold:
    case ErrorCode::InvalidSchema:
    case ErrorCode::InvalidDesign:
    case ErrorCode::InvalidQuery:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Subcommand plumbing

struct Overrides {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<int> threads;
};

fs::path output_dir(const Overrides& o, const fs::path& configured) {
  if (!o.output.empty()) return o.output;
  if (const char* env = std::getenv("CMMMIX_OUTPUT_DIR"); env && *env) return env;
  return configured;
}

RunConfig load_with_overrides(const Overrides& o) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.chain.seed = *o.seed;
  if (o.chains) cfg.chains = *o.chains;
  if (o.threads) cfg.threads = *o.threads;
  cfg.output_dir = output_dir(o, cfg.output_dir);
  validate_run_config(cfg);
  return cfg;
}

MixedDataset load_dataset(const RunConfig& cfg) {
  const Schema schema = load_schema(cfg.schema);
  MixedDataset data = load_csv(cfg.data, schema);
  if (!cfg.standardize) data = MixedDataset(schema, data.original_values(), false);
  return data;
}

fs::path prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

std::string chain_file(const std::string& stem, int c, const std::string& ext) {
  return stem + "_c" + std::to_string(c) + ext;
}

void write_completed(const fs::path& dir, const Model& model, const Draws& d, int c) {
  for (std::size_t j = 0; j < d.completed.size(); ++j)
    write_csv(dir / ("completed_c" + std::to_string(c) + "_" + std::to_string(j + 1) + ".csv"), model.data().schema(),
              d.completed[j]);
}

std::vector<Draws> fit(const RunConfig& cfg, const Model& model, bool checkpoints) {
  ChainConfig chain = cfg.chain;
  if (checkpoints) chain.checkpoint = cfg.output_dir / "checkpoint.bin";
  return run_chains(model, chain, cfg.chains, cfg.threads);
}

int cmd_fit(const Overrides& o, std::ostream& out, bool impute_only) {
  const RunConfig cfg = load_with_overrides(o);
  const Model model = build_model(cfg);
  const fs::path dir = prepare_output(cfg.output_dir);
  const auto draws = fit(cfg, model, !impute_only);
  for (int c = 0; c < cfg.chains; ++c) {
    const auto& d = draws[static_cast<std::size_t>(c)];
    write_completed(dir, model, d, c);
    if (impute_only) continue;
    std::ostringstream trace;
    write_trace_csv(trace, d.trace);
    write_text(dir / chain_file("trace", c, ".csv"), trace.str());
    save_draws(dir / chain_file("draws", c, ".bin"), d.snapshots);
  }
  if (!impute_only) {
    nlohmann::json resolved = run_config_to_json(cfg);
    resolved["resolved_hyperpriors"] = hyperpriors_to_json(model.hyper());
    resolved["resolved_design"] = design_to_json(model.design().config());
    write_text(dir / "config.resolved.json", dump(resolved));
    nlohmann::json summary;
    summary["chains"] = cfg.chains;
    summary["iterations"] = cfg.chain.iterations;
    summary["burn_in"] = cfg.chain.burn_in;
    summary["snapshots_per_chain"] = draws.front().snapshots.size();
    nlohmann::json warnings = nlohmann::json::array();
    for (int c = 0; c < cfg.chains; ++c)
      for (const auto& w : draws[static_cast<std::size_t>(c)].warnings) warnings.push_back("chain " + std::to_string(c) + ": " + w);
    summary["warnings"] = warnings;
    write_text(dir / "fit_summary.json", dump(summary));
    for (const auto& w : warnings) out << "warning: " << w.get<std::string>() << "\n";
  }
  out << (impute_only ? "imputed " : "fitted ") << cfg.chains << " chain(s) into " << dir.string() << "\n";
  return 0;
}

int cmd_select(const Overrides& o, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(o);
  const MixedDataset data = load_dataset(cfg);
  const MiReport report = mrmr_select(data, cfg.selection);
  const fs::path dir = prepare_output(cfg.output_dir);
  write_text(dir / "mi_report.json", dump(to_json(report)));
  write_text(dir / "mi_report.txt", format_table(report));
  out << format_table(report);
  return 0;
}

std::vector<FunctionalSpec> load_queries(const fs::path& path, const Model& model, double& level) {
  const nlohmann::json j = read_json(path);
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    check_keys(j, {"level", "functionals"}, "query file");
    level = j.value("level", level);
    list = &j.at("functionals");
  }
  if (!list->is_array() || list->empty()) bad_config("query file must list at least one functional");
  std::vector<FunctionalSpec> specs;
  for (const auto& f : *list) specs.push_back(functional_from_json(f, model));
  for (std::size_t s = 0; s < specs.size(); ++s)
    if (specs[s].label.empty()) specs[s].label = "q" + std::to_string(s + 1);
  return specs;
}

std::string_view type_name(FunctionalType t) {
  switch (t) {
    case FunctionalType::JointDensity: return "density";
    case FunctionalType::PrX: return "pr_x";
    case FunctionalType::PrY: return "pr_y";
  }
  return "pr_x";
}

int cmd_query(const Overrides& o, const std::string& query_path, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(o);
  if (query_path.empty()) bad_config("query needs --queries");
  if (!fs::exists(query_path)) bad_config("query file '" + query_path + "' does not exist");
  const Model model = build_model(cfg);
  double level = cfg.level;
  const auto specs = load_queries(query_path, model, level);
  std::vector<ModelState> draws;
  for (int c = 0; c < cfg.chains; ++c) {
    auto d = load_draws(cfg.output_dir / chain_file("draws", c, ".bin"), model);
    draws.insert(draws.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  std::ostringstream summary, values;
  summary << "label,type,mean,lower,upper,level,draws\n";
  values << "label,draw,value\n";
  for (const auto& spec : specs) {
    const auto s = summarize_over_draws(
        draws, [&](const ModelState& st) { return evaluate_functional(model, st, spec); }, level);
    summary << spec.label << ',' << type_name(spec.type) << ',' << format_double(s.mean) << ','
            << format_double(s.lower) << ',' << format_double(s.upper) << ',' << format_double(s.level) << ','
            << s.values.size() << '\n';
    for (std::size_t t = 0; t < s.values.size(); ++t)
      values << spec.label << ',' << t << ',' << format_double(s.values[t]) << '\n';
  }
  write_text(cfg.output_dir / "query_summary.csv", summary.str());
  write_text(cfg.output_dir / "query_draws.csv", values.str());
  out << summary.str();
  return 0;
}

std::vector<TraceRow> read_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'; run fit first");
  std::vector<std::string> fields;
  if (!read_csv_record(in, fields)) throw Error(ErrorCode::Io, "empty trace '" + path.string() + "'");
  const std::size_t k = fields.size() - 3;
  std::vector<TraceRow> rows;
  while (read_csv_record(in, fields)) {
    if (fields.size() != k + 3) throw Error(ErrorCode::Io, "malformed trace '" + path.string() + "'");
    TraceRow r;
    r.sweep = std::stoll(fields[0]);
    r.alpha = std::stod(fields[1]);
    r.tau2.resize(static_cast<Eigen::Index>(k));
    for (std::size_t m = 0; m < k; ++m) r.tau2(static_cast<Eigen::Index>(m)) = std::stod(fields[2 + m]);
    r.active = std::stoi(fields[2 + k]);
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_report(const Overrides& o, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(o);
  std::vector<std::vector<TraceRow>> traces;
  for (int c = 0; c < cfg.chains; ++c) traces.push_back(read_trace(cfg.output_dir / chain_file("trace", c, ".csv")));
  const std::int64_t burn = cfg.chain.burn_in;
  // Post-burn-in series of alpha and the active count per chain.
  std::map<std::string, std::vector<std::vector<double>>> series;
  for (const auto& t : traces) {
    std::vector<double> alpha, active;
    for (const auto& r : t)
      if (r.sweep > burn) {
        alpha.push_back(r.alpha);
        active.push_back(r.active);
      }
    series["alpha"].push_back(alpha);
    series["active"].push_back(active);
  }
  std::ostringstream csv;
  csv << "quantity,chain,mean,sd,psrf\n";
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, chains] : series) {
    std::optional<double> psrf;
    std::size_t len = chains.front().size();
    for (const auto& c : chains) len = std::min(len, c.size());
    if (chains.size() >= 2 && len >= 2) {
      std::vector<std::vector<double>> trimmed;
      for (const auto& c : chains) trimmed.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(len));
      psrf = gelman_rubin(trimmed);
    }
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto s = summarize_values(chains[c].empty() ? std::vector<double>{0.0} : chains[c]);
      double ss = 0.0;
      for (double v : chains[c]) ss += (v - s.mean) * (v - s.mean);
      const double sd = chains[c].size() > 1 ? std::sqrt(ss / static_cast<double>(chains[c].size() - 1)) : 0.0;
      csv << name << ',' << c << ',' << format_double(s.mean) << ',' << format_double(sd) << ','
          << (psrf ? format_double(*psrf) : "NA") << '\n';
      per.push_back({{"chain", c}, {"mean", s.mean}, {"sd", sd}});
    }
    j[name] = {{"chains", per}, {"psrf", psrf ? nlohmann::json(*psrf) : nlohmann::json(nullptr)}};
  }
  write_text(cfg.output_dir / "report.csv", csv.str());
  write_text(cfg.output_dir / "report.json", dump(j));
  out << csv.str();
  return 0;
}

int cmd_fuse_sim(const Overrides& o, std::ostream& out) {
  nlohmann::json j = o.config.empty() ? study_to_json(default_study()) : read_json(o.config);
  fs::path configured = "fusion_out";
  if (j.is_object() && j.contains("output_dir")) {
    configured = resolve(fs::path(o.config).parent_path(), j.at("output_dir").get<std::string>());
    j.erase("output_dir");
  }
  StudyConfig cfg = study_from_json(j);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  validate_study(cfg);
  const fs::path dir = prepare_output(output_dir(o, configured));
  const FusionReport report = run_fusion_study(cfg);
  std::ostringstream csv, reg;
  write_report_csv(csv, report);
  write_regression_csv(reg, report);
  write_text(dir / "fusion_report.csv", csv.str());
  write_text(dir / "fusion_regression.csv", reg.str());
  write_text(dir / "fusion_report.json", dump(report_to_json(report)));
  write_text(dir / "study.resolved.json", dump(study_to_json(cfg)));
  out << csv.str();
  return 0;
}

int cmd_show_config(const Overrides& o, bool study, std::ostream& out) {
  if (study) {
    StudyConfig cfg = o.config.empty() ? default_study() : study_from_json([&] {
      auto j = read_json(o.config);
      if (j.is_object()) j.erase("output_dir");
      return j;
    }());
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    out << dump(study_to_json(cfg));
    return 0;
  }
  if (o.config.empty()) {
    out << dump(run_config_to_json(RunConfig{}));
    return 0;
  }
  const RunConfig cfg = load_with_overrides(o);
  nlohmann::json j = run_config_to_json(cfg);
  const Model model = build_model(cfg);
  j["resolved_hyperpriors"] = hyperpriors_to_json(model.hyper());
  j["resolved_design"] = design_to_json(model.design().config());
  out << dump(j);
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base) {
  check_keys(j,
             {"data", "schema", "standardize", "design", "ordinal_fixed_linear", "weights", "select_features",
              "selection", "dstar", "neighbor_fraction", "hyperpriors", "truncation", "chain", "seed", "chains",
              "threads", "output_dir", "level"},
             "run config");
  RunConfig cfg;
  try {
    cfg.data = resolve(base, j.value("data", std::string{}));
    cfg.schema = resolve(base, j.value("schema", std::string{}));
    cfg.standardize = j.value("standardize", cfg.standardize);
    if (j.contains("design")) cfg.design = design_from_json(j.at("design"));
    cfg.ordinal_fixed_linear = j.value("ordinal_fixed_linear", cfg.ordinal_fixed_linear);
    if (j.contains("weights")) cfg.weights = j.at("weights").get<std::map<std::string, double>>();
    cfg.select_features = j.value("select_features", cfg.select_features);
    if (j.contains("selection")) {
      const auto& s = j.at("selection");
      check_keys(s, {"t1", "t2", "bins"}, "selection");
      cfg.selection.t1 = s.value("t1", cfg.selection.t1);
      cfg.selection.t2 = s.value("t2", cfg.selection.t2);
      cfg.selection.bins = s.value("bins", cfg.selection.bins);
    }
    if (j.contains("dstar")) cfg.dstar = j.at("dstar").get<double>();
    if (j.contains("neighbor_fraction")) cfg.neighbor_fraction = j.at("neighbor_fraction").get<double>();
    if (j.contains("hyperpriors")) {
      cfg.hyperpriors = j.at("hyperpriors");
      if (!cfg.hyperpriors.is_object()) bad_config("hyperpriors must be an object of overrides");
    }
    cfg.truncation = j.value("truncation", cfg.truncation);
    if (j.contains("chain")) {
      const auto& c = j.at("chain");
      check_keys(c, {"iterations", "burn_in", "thin", "completions", "location_update", "permute_order", "keep_rows"},
                 "chain");
      cfg.chain.iterations = c.value("iterations", cfg.chain.iterations);
      cfg.chain.burn_in = c.value("burn_in", cfg.chain.burn_in);
      cfg.chain.thin = c.value("thin", cfg.chain.thin);
      cfg.chain.completions = c.value("completions", cfg.chain.completions);
      const auto mode = c.value("location_update", std::string("exact"));
      if (mode != "exact" && mode != "members_only") bad_config("location_update must be exact or members_only");
      cfg.chain.options.location_update = mode == "exact" ? LocationUpdate::Exact : LocationUpdate::MembersOnly;
      cfg.chain.options.permute_order = c.value("permute_order", false);
      cfg.chain.keep_rows = c.value("keep_rows", false);
    }
    cfg.chain.seed = j.value("seed", cfg.chain.seed);
    cfg.chains = j.value("chains", cfg.chains);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output_dir = resolve(base, j.value("output_dir", cfg.output_dir.string()));
    cfg.level = j.value("level", cfg.level);
  } catch (const nlohmann::json::exception& e) {
    bad_config(std::string("run config: ") + e.what());
  }
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["data"] = cfg.data.string();
  j["schema"] = cfg.schema.string();
  j["standardize"] = cfg.standardize;
  if (cfg.design) j["design"] = design_to_json(*cfg.design);
  j["ordinal_fixed_linear"] = cfg.ordinal_fixed_linear;
  if (cfg.weights) j["weights"] = *cfg.weights;
  j["select_features"] = cfg.select_features;
  j["selection"] = {{"t1", cfg.selection.t1}, {"t2", cfg.selection.t2}, {"bins", cfg.selection.bins}};
  if (cfg.dstar) j["dstar"] = *cfg.dstar;
  if (cfg.neighbor_fraction) j["neighbor_fraction"] = *cfg.neighbor_fraction;
  j["hyperpriors"] = cfg.hyperpriors;
  j["truncation"] = cfg.truncation;
  j["chain"] = {{"iterations", cfg.chain.iterations},
                {"burn_in", cfg.chain.burn_in},
                {"thin", cfg.chain.thin},
                {"completions", cfg.chain.completions},
                {"location_update",
                 cfg.chain.options.location_update == LocationUpdate::Exact ? "exact" : "members_only"},
                {"permute_order", cfg.chain.options.permute_order},
                {"keep_rows", cfg.chain.keep_rows}};
  j["seed"] = cfg.chain.seed;
  j["chains"] = cfg.chains;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir.string();
  j["level"] = cfg.level;
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), path.parent_path());
}

void validate_run_config(const RunConfig& cfg) {
  if (cfg.data.empty() || cfg.schema.empty()) bad_config("data and schema paths are required");
  if (!fs::exists(cfg.data)) bad_config("data file '" + cfg.data.string() + "' does not exist");
  if (!fs::exists(cfg.schema)) bad_config("schema file '" + cfg.schema.string() + "' does not exist");
  try {
    validate_chain_config(cfg.chain);
  } catch (const Error& e) {
    bad_config(e.what());
  }
  if (cfg.chains < 1) bad_config("chains must be positive");
  if (cfg.threads < 1) bad_config("threads must be positive");
  if (cfg.truncation < 1) bad_config("truncation must be positive");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) bad_config("level must lie in (0, 1)");
  if (cfg.dstar && cfg.neighbor_fraction) bad_config("give dstar or neighbor_fraction, not both");
  if (cfg.weights && cfg.select_features) bad_config("give weights or select_features, not both");
  if (cfg.neighbor_fraction && !(*cfg.neighbor_fraction > 0.0 && *cfg.neighbor_fraction <= 1.0))
    bad_config("neighbor_fraction must lie in (0, 1]");
  for (const char* key : {"distance", "truncation"})
    if (cfg.hyperpriors.contains(key)) bad_config(std::string("'") + key + "' is not a hyperprior override");
}

Model build_model(const RunConfig& cfg) {
  const MixedDataset data = load_dataset(cfg);
  const Schema& schema = data.schema();
  const auto& layout = data.layout();

  std::optional<DistanceSpec> spec;
  std::optional<std::vector<double>> weights;
  if (cfg.weights) {
    std::vector<double> w(static_cast<std::size_t>(layout.q()), 0.0);
    for (const auto& [name, value] : *cfg.weights) {
      const int col = data.column_index(name);
      const auto it = std::find(layout.fixed.begin(), layout.fixed.end(), col);
      if (col < 0 || it == layout.fixed.end()) bad_config("weight for '" + name + "', which is not a fixed variable");
      w[static_cast<std::size_t>(it - layout.fixed.begin())] = value;
    }
    weights = w;
  } else if (cfg.select_features) {
    weights = mrmr_select(data, cfg.selection).weights;
  }
  if (weights || cfg.dstar || cfg.neighbor_fraction) {
    DistanceSpec s = weights ? weighted_spec(data, *weights, 1.0) : equal_weight_spec(data, 1.0);
    if (cfg.dstar) {
      s.dstar = *cfg.dstar;
    } else if (layout.q() > 0) {
      s.dstar = solve_dstar(data, s, cfg.neighbor_fraction.value_or(0.2));
    }
    spec = s;
  }
  Hyperpriors hyper = default_hyperpriors(data, cfg.truncation, spec);
  if (!cfg.hyperpriors.empty()) {
    nlohmann::json j = hyperpriors_to_json(hyper);
    for (const auto& [key, _] : cfg.hyperpriors.items())
      if (!j.contains(key)) bad_config("unknown hyperprior '" + key + "'");
    j.merge_patch(cfg.hyperpriors);
    try {
      hyper = hyperpriors_from_json(j);
    } catch (const Error& e) {
      bad_config(e.what());
    }
  }
  validate_hyperpriors(hyper, layout);
  Design design(schema, cfg.design ? *cfg.design : default_design(schema, cfg.ordinal_fixed_linear));
  return Model(data, std::move(design), std::move(hyper));
}

void save_draws(const fs::path& path, const std::vector<ModelState>& draws) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out.write(kDrawsMagic, sizeof(kDrawsMagic));
  put_le(out, kDrawsVersion);
  put_le(out, static_cast<std::uint64_t>(draws.size()));
  for (const auto& s : draws) write_state(out, s);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

std::vector<ModelState> load_draws(const fs::path& path, const Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'; run fit first");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDrawsMagic, sizeof(magic)) != 0)
    throw Error(ErrorCode::Io, "'" + path.string() + "' is not a draws file");
  if (!get_le(in, version) || version != kDrawsVersion) throw Error(ErrorCode::Io, "unsupported draws version");
  if (!get_le(in, count)) throw Error(ErrorCode::Io, "truncated draws file");
  std::vector<ModelState> draws;
  for (std::uint64_t t = 0; t < count; ++t) draws.push_back(read_state(in, model));
  return draws;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional mixture modeling of mixed data with fixed design variables"};
  app.require_subcommand(1);
  Overrides o;
  std::string queries;
  bool study = false;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("-c,--config", o.config, "JSON configuration file");
    if (config_required) c->required();
    sub->add_option("-o,--output", o.output, "output directory (overrides CMMMIX_OUTPUT_DIR and the config)");
    sub->add_option("--seed", o.seed, "top-level seed");
    sub->add_option("--chains", o.chains, "number of chains");
    sub->add_option("--threads", o.threads, "worker threads");
  };
  auto* select = app.add_subcommand("select-features", "mutual-information report and mRMR selection");
  auto* fit_cmd = app.add_subcommand("fit", "run the sampler and write traces, draws and completed datasets");
  auto* impute = app.add_subcommand("impute", "run the sampler and write completed datasets only");
  auto* query = app.add_subcommand("query", "posterior summaries of functionals over saved draws");
  auto* fuse = app.add_subcommand("fuse-sim", "data-fusion simulation study");
  auto* report = app.add_subcommand("report", "convergence summary of saved traces");
  auto* show = app.add_subcommand("show-config", "print the resolved configuration with every default");
  for (auto* s : {select, fit_cmd, impute, query, report}) common(s, true);
  common(fuse, false);
  common(show, false);
  query->add_option("-q,--queries", queries, "JSON list of functionals")->required();
  show->add_flag("--study", study, "show a fusion study configuration instead of a run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    if (*select) return cmd_select(o, out);
    if (*fit_cmd) return cmd_fit(o, out, false);
    if (*impute) return cmd_fit(o, out, true);
    if (*query) return cmd_query(o, queries, out);
    if (*fuse) return cmd_fuse_sim(o, out);
    if (*report) return cmd_report(o, out);
    if (*show) return cmd_show_config(o, study, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return config_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cmmmix
