#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmmmix/cli.hpp"
#include "cmmmix/error.hpp"
#include "cmmmix/fusion.hpp"
#include "cmmmix/gower.hpp"
#include "cmmmix/infosel.hpp"
#include "cmmmix/sampler.hpp"

namespace py = pybind11;
using namespace cmmmix;

namespace {

// Nested structures cross the boundary as JSON text; the Python wrapper
// turns them into dicts.

std::tuple<int, std::string, std::string> cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"cmmmix"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return {code, out.str(), err.str()};
}

Schema schema_of(const std::string& schema_json) {
  return schema_from_json(nlohmann::json::parse(schema_json));
}

std::string select_features(const Eigen::MatrixXd& values, const std::string& schema_json, double t1, double t2,
                            int bins) {
  const MixedDataset data(schema_of(schema_json), values, false);
  return to_json(mrmr_select(data, {t1, t2, bins})).dump();
}

/// Runs the chains of a run configuration (JSON text, paths relative to
/// `base`) and returns the completed datasets and the alpha traces.
py::dict fit(const std::string& config_json, const std::string& base) {
  const RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json), base);
  validate_run_config(cfg);
  const Model model = build_model(cfg);
  std::vector<Draws> chains;
  {
    py::gil_scoped_release release;
    chains = run_chains(model, cfg.chain, cfg.chains, cfg.threads);
  }
  py::list completed, alpha, active, warnings;
  for (const auto& d : chains) {
    py::list per_chain;
    for (const auto& m : d.completed) per_chain.append(m);
    completed.append(per_chain);
    std::vector<double> a;
    std::vector<int> k;
    for (const auto& row : d.trace) {
      a.push_back(row.alpha);
      k.push_back(row.active);
    }
    alpha.append(a);
    active.append(k);
    for (const auto& w : d.warnings) warnings.append(w);
  }
  std::vector<std::string> columns;
  for (const auto& v : model.data().schema()) columns.push_back(v.name);
  py::dict out;
  out["columns"] = columns;
  out["completed"] = completed;
  out["alpha"] = alpha;
  out["active"] = active;
  out["warnings"] = warnings;
  return out;
}

std::string fusion_study(const std::string& study_json) {
  const StudyConfig cfg = study_from_json(nlohmann::json::parse(study_json));
  validate_study(cfg);
  FusionReport report;
  {
    py::gil_scoped_release release;
    report = run_fusion_study(cfg);
  }
  return report_to_json(report).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional mixture models for mixed data with fixed design variables";

  py::register_exception<Error>(m, "CmmError", PyExc_RuntimeError);

  m.def("cli", &cli, py::arg("args"), "Runs the command-line tool; returns (exit code, stdout, stderr).");
  m.def("select_features", &select_features, py::arg("values"), py::arg("schema_json"), py::arg("t1") = 0.05,
        py::arg("t2") = 0.8, py::arg("bins") = 10);
  m.def("fit", &fit, py::arg("config_json"), py::arg("base") = ".");
  m.def("fusion_study", &fusion_study, py::arg("study_json"));
  m.def("default_study", [] { return study_to_json(default_study()).dump(); });
  m.def("default_run_config", [] { return run_config_to_json(RunConfig{}).dump(); });

  m.def("mi_from_table", &mi_from_table, py::arg("joint"), "Mutual information of a joint probability table.");
  m.def(
      "empirical_mi",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return empirical_mi(a, Kind::Nominal, b, Kind::Nominal).value;
      },
      py::arg("a"), py::arg("b"), "Plug-in mutual information of two nominal columns (levels 1..k, NaN missing).");
  m.def(
      "gower_distance",
      [](const Eigen::MatrixXd& fixed, const std::string& schema_json, const std::vector<double>& weights) {
        const MixedDataset data(schema_of(schema_json), fixed, false);
        const auto spec = weights.empty() ? equal_weight_spec(data, 1.0) : weighted_spec(data, weights, 1.0);
        const auto flat = pairwise_distances(data.fixed_matrix(), spec);
        const auto n = static_cast<Eigen::Index>(data.rows());
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
        std::size_t at = 0;
        for (Eigen::Index i = 1; i < n; ++i)
          for (Eigen::Index j = 0; j < i; ++j) d(i, j) = d(j, i) = flat[at++];
        return d;
      },
      py::arg("values"), py::arg("schema_json"), py::arg("weights") = std::vector<double>{},
      "Pairwise Gower distances over the fixed columns.");
}
