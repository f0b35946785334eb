#include "cmmmix/fusion.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "cmmmix/error.hpp"
#include "cmmmix/infosel.hpp"
#include "cmmmix/linalg.hpp"
#include "cmmmix/model.hpp"
#include "cmmmix/query.hpp"
#include "cmmmix/random.hpp"
#include "cmmmix/sampler.hpp"

namespace cmmmix {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

[[noreturn]] void bad_study(const std::string& what) {
  throw Error(ErrorCode::InvalidStudyConfig, what);
}

double phi_cdf(double z) {
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

int column_of(const Schema& schema, const std::string& name) {
  for (std::size_t c = 0; c < schema.size(); ++c)
    if (schema[c].name == name) return static_cast<int>(c);
  throw Error(ErrorCode::UnknownColumn, "no column named '" + name + "'");
}

/// The three generators resolved against the shared schema.
struct Compiled {
  Design z, y, x;
  std::vector<std::vector<double>> thresholds;  ///< copula cut points per shared variable

  explicit Compiled(const GenConfig& cfg)
      : z(shared_schema(cfg), cfg.z.terms), y(shared_schema(cfg), cfg.y.terms),
        x(shared_schema(cfg), cfg.x.terms) {
    const boost::math::normal std_normal;
    for (const auto& v : cfg.shared) {
      std::vector<double> t;
      double cum = 0.0;
      for (int l = 0; l + 1 < v.levels(); ++l) {
        cum += v.probs[idx(l)];
        t.push_back(boost::math::quantile(std_normal, std::clamp(cum, 1e-300, 1.0 - 1e-16)));
      }
      thresholds.push_back(std::move(t));
    }
  }

  double z_mean(const GenConfig& cfg, std::span<const double> a) const {
    return z.evaluate(a).dot(cfg.z.coef);
  }

  std::vector<double> y_probs(const GenConfig& cfg, std::span<const double> a) const {
    const double mu = y.evaluate(a).dot(cfg.y.coef);
    std::vector<double> p;
    double prev = 0.0;
    for (double c : cfg.y.cutoffs) {
      const double cdf = phi_cdf(c - mu);
      p.push_back(cdf - prev);
      prev = cdf;
    }
    p.push_back(1.0 - prev);
    return p;
  }

  std::vector<double> x_probs(const GenConfig& cfg, std::span<const double> a) const {
    const Eigen::VectorXd eta = cfg.x.coef * x.evaluate(a);
    std::vector<double> logit{0.0};
    for (Eigen::Index c = 0; c < eta.size(); ++c) logit.push_back(eta(c));
    const double m = *std::max_element(logit.begin(), logit.end());
    double s = 0.0;
    for (double& v : logit) s += (v = std::exp(v - m));
    for (double& v : logit) v /= s;
    return logit;
  }

  void draw_shared_row(const GenConfig& cfg, Rng& rng, std::span<double> out) const {
    const double u = draw_normal(rng);
    for (std::size_t j = 0; j < cfg.shared.size(); ++j) {
      const double lam = cfg.shared[j].loading;
      const double s = lam * u + std::sqrt(1.0 - lam * lam) * draw_normal(rng);
      const auto& t = thresholds[j];
      out[j] = 1.0 + static_cast<double>(std::count_if(t.begin(), t.end(), [&](double c) { return c < s; }));
    }
  }
};

int draw_index(Rng& rng, const std::vector<double>& probs) {
  double u = rng.uniform();
  for (std::size_t l = 0; l + 1 < probs.size(); ++l) {
    if (u < probs[l]) return static_cast<int>(l);
    u -= probs[l];
  }
  return static_cast<int>(probs.size()) - 1;
}

/// Draws (z, y, x) for one shared row.
std::array<double, 3> draw_targets(const GenConfig& cfg, const Compiled& gen, std::span<const double> a, Rng& rng) {
  const double z = gen.z_mean(cfg, a) + cfg.z.noise_sd * draw_normal(rng);
  const double w = gen.y.evaluate(a).dot(cfg.y.coef) + draw_normal(rng);
  const double y = 1.0 + static_cast<double>(
                             std::count_if(cfg.y.cutoffs.begin(), cfg.y.cutoffs.end(), [&](double c) { return c < w; }));
  const double x = 1.0 + draw_index(rng, gen.x_probs(cfg, a));
  return {z, y, x};
}

nlohmann::json terms_json(const DesignConfig& d) { return design_to_json(d).at("terms"); }
DesignConfig terms_from(const nlohmann::json& j) { return design_from_json(nlohmann::json{{"terms", j}}); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::vector<double> column_vector(const Eigen::MatrixXd& m, int c) {
  std::vector<double> out(idx(static_cast<int>(m.rows())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[idx(static_cast<int>(i))] = m(i, c);
  return out;
}

// ---------------------------------------------------------------------------
// Methods

std::vector<std::string> variant_features(const CmmVariant& variant, const MixedDataset& data) {
  if (!variant.features.empty()) return variant.features;
  const MiReport report = mrmr_select(data);
  std::vector<int> order(report.fixed_names.size());
  for (std::size_t l = 0; l < order.size(); ++l) order[l] = static_cast<int>(l);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return report.imax_normalized(a) > report.imax_normalized(b);
  });
  std::vector<std::string> out;
  for (int t = 0; t < variant.top && t < static_cast<int>(order.size()); ++t)
    out.push_back(report.fixed_names[idx(order[idx(t)])]);
  return out;
}

/// Default design of `schema`, optionally without the dummies of nominal `drop`.
DesignConfig study_design(const Schema& schema, const std::string& drop, bool keep) {
  DesignConfig d = default_design(schema);
  if (!keep)
    std::erase_if(d.terms, [&](const DesignTerm& t) { return t.type == DesignTerm::Type::Dummy && t.variable == drop; });
  return d;
}

std::vector<Eigen::MatrixXd> fit_and_complete(const StudyConfig& cfg, const Model& model, std::uint64_t seed) {
  ChainConfig chain;
  chain.iterations = cfg.iterations;
  chain.burn_in = cfg.burn_in;
  chain.seed = seed;
  chain.completions = cfg.completions;
  return run_chain(model, chain).completed;
}

std::vector<Eigen::MatrixXd> cmm_impute(const StudyConfig& cfg, const CmmVariant& variant, const Schema& schema,
                                        const Eigen::MatrixXd& blanked, std::uint64_t seed) {
  MixedDataset data(schema, blanked);
  const auto features = variant_features(variant, data);
  const auto& layout = data.layout();
  std::vector<double> weights(idx(layout.q()), 0.0);
  for (const auto& name : features) {
    const int col = column_of(schema, name);
    const auto it = std::find(layout.fixed.begin(), layout.fixed.end(), col);
    if (it == layout.fixed.end()) bad_study("feature '" + name + "' is not a shared variable");
    weights[idx(static_cast<int>(it - layout.fixed.begin()))] = 1.0 / static_cast<double>(features.size());
  }
  auto hyper = default_hyperpriors(data, cfg.truncation, weighted_spec(data, weights, variant.dstar));
  Model model(data, Design(schema, study_design(schema, cfg.generator.x.name, cfg.design_includes_x)),
              std::move(hyper));
  return fit_and_complete(cfg, model, seed);
}

std::vector<Eigen::MatrixXd> joint_impute(const StudyConfig& cfg, Schema schema, const Eigen::MatrixXd& blanked,
                                          std::uint64_t seed) {
  for (auto& v : schema) v.role = Role::Random;
  MixedDataset data(schema, blanked);
  auto hyper = default_hyperpriors(data, cfg.truncation);
  Model model(data, Design(schema, study_design(schema, cfg.generator.x.name, cfg.design_includes_x)),
              std::move(hyper));
  return fit_and_complete(cfg, model, seed);
}

std::vector<Eigen::MatrixXd> matching_impute(const StudyConfig& cfg, const Schema& schema,
                                             const Eigen::MatrixXd& blanked, std::uint64_t seed) {
  std::vector<std::string> shared;
  for (const auto& v : cfg.generator.shared) shared.push_back(v.name);
  const std::vector<std::string> targets{cfg.generator.x.name, cfg.generator.y.name, cfg.generator.z.name};
  std::vector<Eigen::MatrixXd> out;
  for (int t = 0; t < cfg.completions; ++t)
    out.push_back(statistical_matching(blanked, schema, shared, targets,
                                       derive_seed(seed, StreamTag::Matching, static_cast<std::uint64_t>(t))));
  return out;
}

FusionColumns columns_of(const GenConfig& g) { return {g.x.name, g.y.name, g.z.name}; }

struct ReplicationResult {
  std::vector<ReplicationMetrics> metrics;
  std::vector<RegressionRow> regression;
};

ReplicationResult evaluate_replication(const StudyConfig& cfg, int r, const std::vector<MethodOutput>& outputs,
                                       const Schema& schema, const std::vector<TrackedCell>& cells,
                                       const std::vector<double>& truth) {
  ReplicationResult res;
  const double n = static_cast<double>(cfg.n);
  RubinOptions opts;
  opts.level = cfg.level;
  for (const auto& out : outputs) {
    const std::size_t m = out.completed.size();
    std::vector<std::vector<double>> est;
    for (const auto& c : out.completed) est.push_back(cell_estimates(c, schema, cells));

    std::vector<double> errors;
    int covered = 0;
    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
      std::vector<double> q(m), u(m);
      for (std::size_t t = 0; t < m; ++t) {
        q[t] = est[t][cell];
        u[t] = q[t] * (1.0 - q[t]) / n;
      }
      const auto rr = rubin_combine(q, u, opts);
      if (rr.lower <= truth[cell] && truth[cell] <= rr.upper) ++covered;
      errors.push_back(std::abs(rr.estimate - truth[cell]));
    }
    ReplicationMetrics rm;
    rm.replication = r;
    rm.method = out.method;
    rm.coverage = static_cast<double>(covered) / static_cast<double>(cells.size());
    rm.mean_abs_error = mean_of(errors);
    rm.q25_abs_error = quantile_type7(errors, 0.25);
    rm.q75_abs_error = quantile_type7(errors, 0.75);
    std::vector<double> cmi;
    for (const auto& c : out.completed)
      cmi.push_back(stratified_cmi(c, schema, cfg.generator.x.name, cfg.generator.z.name, cfg.cmi_strata, cfg.cmi_bins));
    rm.cmi = mean_of(cmi);
    res.metrics.push_back(rm);

    std::vector<OlsFit> fits;
    for (const auto& c : out.completed) fits.push_back(cross_block_regression(c, schema, cfg.generator));
    const auto& terms = fits.front().terms;
    const auto truth_coef = [&](std::size_t t) -> std::pair<double, bool> {
      const int dx = cfg.generator.x.levels() - 1, dy = cfg.generator.y.levels() - 1;
      if (t == 0) return {cfg.generator.z.coef(0), false};
      if (t <= idx(dx + dy)) return {0.0, true};
      return {cfg.generator.z.coef(static_cast<Eigen::Index>(t) - dx - dy), false};
    };
    for (std::size_t t = 0; t < terms.size(); ++t) {
      std::vector<double> q, u;
      for (const auto& f : fits) {
        q.push_back(f.coef(static_cast<Eigen::Index>(t)));
        u.push_back(f.variance(static_cast<Eigen::Index>(t)));
      }
      RubinOptions ro = opts;
      ro.complete_df = fits.front().df;
      const auto rr = rubin_combine(q, u, ro);
      const auto [tv, cross] = truth_coef(t);
      res.regression.push_back({r, out.method, terms[t], cross, tv, rr.estimate, rr.lower, rr.upper});
    }
  }
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

GenConfig default_generator() {
  GenConfig g;
  auto ord = [&](std::string name, std::vector<double> p, double loading) {
    g.shared.push_back({std::move(name), Kind::Ordinal, std::move(p), loading});
  };
  auto nom = [&](std::string name, std::vector<double> p, double loading) {
    g.shared.push_back({std::move(name), Kind::Nominal, std::move(p), loading});
  };
  ord("o1", {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6}, 0.5);
  ord("o2", {0.10, 0.20, 0.30, 0.25, 0.15}, 0.6);
  ord("o3", {0.30, 0.25, 0.20, 0.15, 0.10}, 0.6);
  ord("o4", {0.10, 0.15, 0.20, 0.20, 0.15, 0.10, 0.10}, 0.4);
  ord("o5", {0.05, 0.15, 0.30, 0.30, 0.20}, 0.3);
  ord("o6", {0.25, 0.25, 0.20, 0.15, 0.15}, 0.2);
  nom("n1", {0.45, 0.20, 0.20, 0.15}, 0.3);
  nom("n2", {0.40, 0.60}, 0.4);
  nom("n3", {0.50, 0.50}, 0.3);
  nom("n4", {0.70, 0.30}, 0.3);
  nom("n5", {0.80, 0.20}, 0.2);

  using T = DesignTerm;
  g.z.terms.terms = {T::intercept(), T::linear("o3"), T::dummy("n3", 2), T::linear("o1"),
                     T::interaction(T::linear("o3"), T::dummy("n3", 2))};
  g.z.coef = (Eigen::VectorXd(5) << -1.7, 0.5, 0.5, 0.15, 0.2).finished();
  g.z.noise_sd = 1.0;

  g.y.terms.terms = {T::intercept(), T::linear("o3"), T::dummy("n3", 2), T::linear("o2")};
  g.y.coef = (Eigen::VectorXd(4) << -1.6, 0.4, 0.7, 0.1).finished();
  g.y.cutoffs = {-0.4, 0.6};

  g.x.terms.terms = {T::intercept(), T::linear("o3"), T::dummy("n3", 2), T::linear("o5"), T::dummy("n1", 2)};
  g.x.coef = (Eigen::MatrixXd(2, 5) << -1.5, 0.5, -0.8, 0.2, 0.3,  //
              0.8, -0.4, 1.0, -0.1, -0.5)
                 .finished();
  return g;
}

void validate_generator(const GenConfig& cfg) {
  if (cfg.shared.empty()) bad_study("at least one shared variable is required");
  for (const auto& v : cfg.shared) {
    if (v.kind == Kind::Continuous) bad_study("shared variable '" + v.name + "' must be categorical");
    if (v.levels() < 2) bad_study("shared variable '" + v.name + "' needs at least two levels");
    double s = 0.0;
    for (double p : v.probs) {
      if (!(p > 0.0)) bad_study("level probabilities of '" + v.name + "' must be positive");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) bad_study("level probabilities of '" + v.name + "' must sum to 1");
    if (!(std::abs(v.loading) < 1.0)) bad_study("loading of '" + v.name + "' must lie in (-1, 1)");
  }
  if (cfg.z.coef.size() != static_cast<Eigen::Index>(cfg.z.terms.size())) bad_study("z: one coefficient per term");
  if (!(cfg.z.noise_sd > 0.0)) bad_study("z: noise_sd must be positive");
  if (cfg.y.coef.size() != static_cast<Eigen::Index>(cfg.y.terms.size())) bad_study("y: one coefficient per term");
  if (cfg.y.cutoffs.empty() || !std::is_sorted(cfg.y.cutoffs.begin(), cfg.y.cutoffs.end()))
    bad_study("y: cutoffs must be nonempty and increasing");
  if (cfg.x.coef.rows() < 1 || cfg.x.coef.cols() != static_cast<Eigen::Index>(cfg.x.terms.size()))
    bad_study("x: coefficient matrix must be (levels - 1) x terms");
  const Schema s = fusion_schema(cfg);
  validate_schema(s);
  Compiled{cfg};
}

nlohmann::json generator_to_json(const GenConfig& cfg) {
  nlohmann::json shared = nlohmann::json::array();
  for (const auto& v : cfg.shared)
    shared.push_back({{"name", v.name}, {"kind", std::string(to_string(v.kind))}, {"probs", v.probs},
                      {"loading", v.loading}});
  nlohmann::json xcoef = nlohmann::json::array();
  for (Eigen::Index c = 0; c < cfg.x.coef.rows(); ++c) xcoef.push_back(vec_json(cfg.x.coef.row(c).transpose()));
  return {
      {"shared", shared},
      {"z", {{"name", cfg.z.name}, {"terms", terms_json(cfg.z.terms)}, {"coef", vec_json(cfg.z.coef)},
             {"noise_sd", cfg.z.noise_sd}}},
      {"y", {{"name", cfg.y.name}, {"terms", terms_json(cfg.y.terms)}, {"coef", vec_json(cfg.y.coef)},
             {"cutoffs", cfg.y.cutoffs}}},
      {"x", {{"name", cfg.x.name}, {"terms", terms_json(cfg.x.terms)}, {"coef", xcoef}}},
      {"seed", cfg.seed},
  };
}

GenConfig generator_from_json(const nlohmann::json& j) {
  try {
    GenConfig g;
    for (const auto& v : j.at("shared")) {
      const auto kind = v.at("kind").get<std::string>();
      if (kind != "ordinal" && kind != "nominal") bad_study("shared kind must be ordinal or nominal");
      g.shared.push_back({v.at("name").get<std::string>(), kind == "ordinal" ? Kind::Ordinal : Kind::Nominal,
                          v.at("probs").get<std::vector<double>>(), v.value("loading", 0.0)});
    }
    const auto& z = j.at("z");
    g.z.name = z.value("name", "z");
    g.z.terms = terms_from(z.at("terms"));
    g.z.coef = vec_from(z.at("coef"));
    g.z.noise_sd = z.value("noise_sd", 1.0);
    const auto& y = j.at("y");
    g.y.name = y.value("name", "y");
    g.y.terms = terms_from(y.at("terms"));
    g.y.coef = vec_from(y.at("coef"));
    g.y.cutoffs = y.at("cutoffs").get<std::vector<double>>();
    const auto& x = j.at("x");
    g.x.name = x.value("name", "x");
    g.x.terms = terms_from(x.at("terms"));
    const auto rows = x.at("coef");
    g.x.coef.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(g.x.terms.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const auto v = rows[c].get<std::vector<double>>();
      if (v.size() != g.x.terms.size()) bad_study("x: coefficient rows need one entry per term");
      for (std::size_t t = 0; t < v.size(); ++t) g.x.coef(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = v[t];
    }
    g.seed = j.value("seed", std::uint64_t{1});
    return g;
  } catch (const nlohmann::json::exception& e) {
    bad_study(std::string("generator: ") + e.what());
  }
}

Schema shared_schema(const GenConfig& cfg) {
  Schema s;
  for (const auto& v : cfg.shared) s.push_back({v.name, Role::Fixed, v.kind, v.levels()});
  return s;
}

Schema fusion_schema(const GenConfig& cfg) {
  Schema s = shared_schema(cfg);
  s.push_back({cfg.z.name, Role::Random, Kind::Continuous, 0});
  s.push_back({cfg.y.name, Role::Random, Kind::Ordinal, cfg.y.levels()});
  s.push_back({cfg.x.name, Role::Random, Kind::Nominal, cfg.x.levels()});
  return s;
}

Eigen::MatrixXd draw_shared(const GenConfig& cfg, int n, std::uint64_t seed, std::uint64_t sweep) {
  const Compiled gen(cfg);
  const auto a = static_cast<Eigen::Index>(cfg.shared.size());
  RowMatrix out(n, a);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, sweep, StreamTag::Generate, static_cast<std::uint64_t>(i));
    gen.draw_shared_row(cfg, rng, {out.row(i).data(), static_cast<std::size_t>(a)});
  }
  return out;
}

double z_mean(const GenConfig& cfg, std::span<const double> a) { return Compiled(cfg).z_mean(cfg, a); }
std::vector<double> y_probabilities(const GenConfig& cfg, std::span<const double> a) {
  return Compiled(cfg).y_probs(cfg, a);
}
std::vector<double> x_probabilities(const GenConfig& cfg, std::span<const double> a) {
  return Compiled(cfg).x_probs(cfg, a);
}

std::vector<TrackedCell> tracked_cells(const GenConfig& cfg) {
  std::vector<TrackedCell> cells;
  for (const auto& [name, levels] : {std::pair{cfg.x.name, cfg.x.levels()}, std::pair{cfg.y.name, cfg.y.levels()}})
    for (const auto& v : cfg.shared)
      for (int a = 1; a <= v.levels(); ++a)
        for (int t = 1; t <= levels; ++t) cells.push_back({name, t, v.name, a});
  return cells;
}

namespace {

/// Accumulates Pr(target | a) 1{a_j = level} over shared rows.
std::vector<double> conditional_cells(const GenConfig& cfg, const Compiled& gen, const RowMatrix& shared) {
  const auto cells = tracked_cells(cfg);
  std::map<std::pair<std::string, std::string>, std::size_t> first;
  for (std::size_t c = 0; c < cells.size(); ++c) first.try_emplace({cells[c].target, cells[c].shared}, c);
  std::vector<double> out(cells.size(), 0.0);
  const auto a = static_cast<std::size_t>(shared.cols());
  for (Eigen::Index i = 0; i < shared.rows(); ++i) {
    const std::span<const double> row{shared.row(i).data(), a};
    const auto px = gen.x_probs(cfg, row), py = gen.y_probs(cfg, row);
    for (std::size_t j = 0; j < a; ++j) {
      const int level = static_cast<int>(row[j]);
      const std::size_t bx = first.at({cfg.x.name, cfg.shared[j].name}) + idx(level - 1) * px.size();
      for (std::size_t t = 0; t < px.size(); ++t) out[bx + t] += px[t];
      const std::size_t by = first.at({cfg.y.name, cfg.shared[j].name}) + idx(level - 1) * py.size();
      for (std::size_t t = 0; t < py.size(); ++t) out[by + t] += py[t];
    }
  }
  for (double& v : out) v /= static_cast<double>(shared.rows());
  return out;
}

}  // namespace

std::vector<double> population_cells(const GenConfig& cfg, int samples) {
  if (samples < 1) bad_study("population_samples must be positive");
  const Compiled gen(cfg);
  const RowMatrix shared = draw_shared(cfg, samples, cfg.seed, 1);
  return conditional_cells(cfg, gen, shared);
}

FusionReplicate generate_fusion_replicate(const MixedDataset& shared, const GenConfig& cfg) {
  if (shared.schema() != shared_schema(cfg))
    throw Error(ErrorCode::InvalidSchema, "shared data do not match the generator's shared variables");
  const Compiled gen(cfg);
  FusionReplicate rep;
  rep.schema = fusion_schema(cfg);
  const auto n = static_cast<Eigen::Index>(shared.rows());
  const auto a = static_cast<Eigen::Index>(shared.cols());
  RowMatrix a_rows = shared.values();
  rep.values.resize(n, a + 3);
  rep.values.leftCols(a) = a_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng(cfg.seed, 0, StreamTag::Generate, static_cast<std::uint64_t>(i), 1);
    const auto d = draw_targets(cfg, gen, {a_rows.row(i).data(), static_cast<std::size_t>(a)}, rng);
    for (int c = 0; c < 3; ++c) rep.values(i, a + c) = d[idx(c)];
  }
  rep.cells = conditional_cells(cfg, gen, a_rows);
  return rep;
}

Eigen::MatrixXd blank_three_way(const Eigen::MatrixXd& values, const Schema& schema, const FusionColumns& columns) {
  const auto n = values.rows();
  if (n < 3) throw Error(ErrorCode::TooFewRows, "three-way blanking needs at least 3 rows, got " + std::to_string(n));
  const int x = column_of(schema, columns.x), y = column_of(schema, columns.y), z = column_of(schema, columns.z);
  const Eigen::Index block = n / 3;
  const double na = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd out = values;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index b = std::min<Eigen::Index>(i / block, 2);
    const auto [c1, c2] = b == 0 ? std::pair{x, z} : b == 1 ? std::pair{x, y} : std::pair{y, z};
    out(i, c1) = na;
    out(i, c2) = na;
  }
  return out;
}

Eigen::MatrixXd statistical_matching(const Eigen::MatrixXd& values, const Schema& schema,
                                     const std::vector<std::string>& match_on, const std::vector<std::string>& targets,
                                     std::uint64_t seed) {
  std::vector<int> keys;
  for (const auto& name : match_on) keys.push_back(column_of(schema, name));
  const auto n = values.rows();
  auto hamming = [&](Eigen::Index i, Eigen::Index j) {
    int d = 0;
    for (int c : keys) d += !(values(i, c) == values(j, c));
    return d;
  };
  Eigen::MatrixXd out = values;
  for (const auto& name : targets) {
    const int col = column_of(schema, name);
    std::vector<Eigen::Index> donors;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isnan(values(i, col))) donors.push_back(i);
    bool any_missing = false;
    for (Eigen::Index i = 0; i < n && !any_missing; ++i) any_missing = std::isnan(values(i, col));
    if (!any_missing) continue;
    if (donors.empty()) throw Error(ErrorCode::NoDonor, "'" + name + "' is observed in no row");
    std::vector<Eigen::Index> best;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isnan(values(i, col))) continue;
      best.clear();
      int dmin = std::numeric_limits<int>::max();
      for (Eigen::Index j : donors) {
        const int d = hamming(i, j);
        if (d < dmin) {
          dmin = d;
          best.clear();
        }
        if (d == dmin) best.push_back(j);
      }
      Rng rng(seed, 0, StreamTag::Matching, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(col));
      const auto pick = best.size() == 1 ? 0 : static_cast<std::size_t>(rng() % best.size());
      out(i, col) = values(best[pick], col);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Study

StudyConfig default_study() {
  StudyConfig s;
  s.generator = default_generator();
  s.variants = {CmmVariant{"C-2S", {}, 2, 0.125}};
  s.cmi_strata = {"o3", "n3"};
  return s;
}

void validate_study(const StudyConfig& cfg) {
  validate_generator(cfg.generator);
  if (cfg.n < 3) throw Error(ErrorCode::TooFewRows, "a fusion study needs n >= 3");
  if (cfg.replications < 1) bad_study("replications must be positive");
  if (cfg.completions < 2) bad_study("at least two completed datasets are needed for the combining rules");
  if (cfg.truncation < 1) bad_study("truncation must be positive");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) bad_study("level must lie in (0, 1)");
  if (cfg.threads < 1) bad_study("threads must be positive");
  if (cfg.cmi_bins < 1) bad_study("cmi_bins must be positive");
  if (!cfg.oracle && !cfg.joint && !cfg.matching && cfg.variants.empty()) bad_study("no methods configured");
  if (cfg.joint || !cfg.variants.empty()) {
    ChainConfig chain;
    chain.iterations = cfg.iterations;
    chain.burn_in = cfg.burn_in;
    chain.completions = cfg.completions;
    try {
      validate_chain_config(chain);
    } catch (const Error& e) {
      bad_study(e.what());
    }
  }
  const Schema schema = shared_schema(cfg.generator);
  auto is_shared = [&](const std::string& name) {
    return std::any_of(schema.begin(), schema.end(), [&](const auto& v) { return v.name == name; });
  };
  std::vector<std::string> labels{"oracle", "joint", "matching"};
  for (const auto& v : cfg.variants) {
    if (std::find(labels.begin(), labels.end(), v.label) != labels.end()) bad_study("duplicate method label '" + v.label + "'");
    labels.push_back(v.label);
    if (v.features.empty() && (v.top < 1 || v.top > static_cast<int>(schema.size())))
      bad_study("variant '" + v.label + "': top must be between 1 and the number of shared variables");
    for (const auto& f : v.features)
      if (!is_shared(f)) bad_study("variant '" + v.label + "': unknown feature '" + f + "'");
    if (!(v.dstar >= 0.0 && v.dstar <= 1.0)) bad_study("variant '" + v.label + "': dstar must lie in [0, 1]");
  }
  for (const auto& s : cfg.cmi_strata)
    if (!is_shared(s)) bad_study("unknown cmi stratum '" + s + "'");
}

nlohmann::json study_to_json(const StudyConfig& cfg) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& v : cfg.variants)
    variants.push_back({{"label", v.label}, {"features", v.features}, {"top", v.top}, {"dstar", v.dstar}});
  return {
      {"generator", generator_to_json(cfg.generator)},
      {"n", cfg.n},
      {"replications", cfg.replications},
      {"completions", cfg.completions},
      {"oracle", cfg.oracle},
      {"joint", cfg.joint},
      {"matching", cfg.matching},
      {"variants", variants},
      {"truncation", cfg.truncation},
      {"iterations", cfg.iterations},
      {"burn_in", cfg.burn_in},
      {"population_samples", cfg.population_samples},
      {"design_includes_x", cfg.design_includes_x},
      {"cmi_strata", cfg.cmi_strata},
      {"cmi_bins", cfg.cmi_bins},
      {"level", cfg.level},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
  };
}

StudyConfig study_from_json(const nlohmann::json& j) {
  StudyConfig s = default_study();
  if (!j.is_object()) bad_study("study config must be a JSON object");
  static const std::vector<std::string> known{
      "generator", "n", "replications", "completions", "oracle", "joint", "matching", "variants", "truncation",
      "iterations", "burn_in", "population_samples", "design_includes_x", "cmi_strata", "cmi_bins", "level", "seed", "threads"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) bad_study("unknown study key '" + key + "'");
  try {
    if (j.contains("generator")) s.generator = generator_from_json(j.at("generator"));
    s.n = j.value("n", s.n);
    s.replications = j.value("replications", s.replications);
    s.completions = j.value("completions", s.completions);
    s.oracle = j.value("oracle", s.oracle);
    s.joint = j.value("joint", s.joint);
    s.matching = j.value("matching", s.matching);
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j.at("variants")) {
        CmmVariant c;
        c.label = v.value("label", c.label);
        c.features = v.value("features", c.features);
        c.top = v.value("top", c.top);
        c.dstar = v.value("dstar", c.dstar);
        s.variants.push_back(c);
      }
    }
    s.truncation = j.value("truncation", s.truncation);
    s.iterations = j.value("iterations", s.iterations);
    s.burn_in = j.value("burn_in", s.burn_in);
    s.population_samples = j.value("population_samples", s.population_samples);
    s.design_includes_x = j.value("design_includes_x", s.design_includes_x);
    s.cmi_strata = j.value("cmi_strata", s.cmi_strata);
    s.cmi_bins = j.value("cmi_bins", s.cmi_bins);
    s.level = j.value("level", s.level);
    s.seed = j.value("seed", s.seed);
    s.threads = j.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    bad_study(e.what());
  }
  return s;
}

std::vector<MethodOutput> run_fusion_replication(const StudyConfig& cfg, int r, FusionReplicate* replicate) {
  const std::uint64_t seed = derive_seed(cfg.seed, StreamTag::Study, static_cast<std::uint64_t>(r));
  GenConfig gen_cfg = cfg.generator;
  gen_cfg.seed = seed;
  const MixedDataset shared(shared_schema(gen_cfg), draw_shared(gen_cfg, cfg.n, seed), false);
  FusionReplicate rep = generate_fusion_replicate(shared, gen_cfg);
  const Eigen::MatrixXd blanked = blank_three_way(rep.values, rep.schema, columns_of(gen_cfg));

  std::vector<MethodOutput> out;
  std::uint64_t method = 0;
  auto key = [&] { return derive_seed(seed, StreamTag::Chain, method++); };
  if (cfg.oracle) out.push_back({"oracle", std::vector<Eigen::MatrixXd>(idx(cfg.completions), rep.values)});
  for (const auto& v : cfg.variants) out.push_back({v.label, cmm_impute(cfg, v, rep.schema, blanked, key())});
  if (cfg.joint) out.push_back({"joint", joint_impute(cfg, rep.schema, blanked, key())});
  if (cfg.matching) out.push_back({"matching", matching_impute(cfg, rep.schema, blanked, key())});
  if (replicate) *replicate = std::move(rep);
  return out;
}

FusionReport run_fusion_study(const StudyConfig& cfg) {
  validate_study(cfg);
  const auto cells = tracked_cells(cfg.generator);
  const auto truth = population_cells(cfg.generator, cfg.population_samples);
  const Schema schema = fusion_schema(cfg.generator);

  std::vector<ReplicationResult> results(idx(cfg.replications));
  std::vector<std::exception_ptr> errors(idx(cfg.replications));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r; (r = next++) < cfg.replications;) {
      try {
        results[idx(r)] = evaluate_replication(cfg, r, run_fusion_replication(cfg, r), schema, cells, truth);
      } catch (...) {
        errors[idx(r)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(cfg.threads, cfg.replications); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  FusionReport report;
  report.replications = cfg.replications;
  report.tracked_cells = static_cast<int>(cells.size());
  for (auto& res : results) {
    report.per_replication.insert(report.per_replication.end(), res.metrics.begin(), res.metrics.end());
    report.regression.insert(report.regression.end(), res.regression.begin(), res.regression.end());
  }
  for (const auto& first : results.front().metrics) {
    std::vector<double> cov, mae, q25, q75, cmi;
    for (const auto& m : report.per_replication) {
      if (m.method != first.method) continue;
      cov.push_back(m.coverage);
      mae.push_back(m.mean_abs_error);
      q25.push_back(m.q25_abs_error);
      q75.push_back(m.q75_abs_error);
      cmi.push_back(m.cmi);
    }
    int cross = 0, zero = 0;
    for (const auto& row : report.regression)
      if (row.method == first.method && row.cross) {
        ++cross;
        zero += row.lower <= 0.0 && 0.0 <= row.upper;
      }
    MethodSummary s;
    s.method = first.method;
    s.coverage = mean_of(cov);
    s.coverage_se = se_of(cov);
    s.mean_abs_error = mean_of(mae);
    s.mean_abs_error_se = se_of(mae);
    s.q25_abs_error = mean_of(q25);
    s.q75_abs_error = mean_of(q75);
    s.cross_zero_rate = cross ? static_cast<double>(zero) / cross : 0.0;
    s.cmi = mean_of(cmi);
    report.methods.push_back(s);
  }
  return report;
}

std::vector<double> cell_estimates(const Eigen::MatrixXd& completed, const Schema& schema,
                                   const std::vector<TrackedCell>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  const double n = static_cast<double>(completed.rows());
  for (const auto& c : cells) {
    const int t = column_of(schema, c.target), a = column_of(schema, c.shared);
    const auto count = ((completed.col(t).array() == c.target_level) && (completed.col(a).array() == c.shared_level)).count();
    out.push_back(static_cast<double>(count) / n);
  }
  return out;
}

double stratified_cmi(const Eigen::MatrixXd& completed, const Schema& schema, const std::string& x,
                      const std::string& z, const std::vector<std::string>& strata, int bins) {
  const int xc = column_of(schema, x);
  const auto zcodes = discretize(column_vector(completed, column_of(schema, z)), Kind::Continuous, bins);
  std::vector<int> sc;
  for (const auto& s : strata) sc.push_back(column_of(schema, s));
  const int xl = schema[idx(xc)].levels;
  const int zl = *std::max_element(zcodes.begin(), zcodes.end()) + 1;

  std::map<std::vector<double>, Eigen::MatrixXd> tables;
  for (Eigen::Index i = 0; i < completed.rows(); ++i) {
    std::vector<double> key;
    for (int c : sc) key.push_back(completed(i, c));
    auto [it, inserted] = tables.try_emplace(key, Eigen::MatrixXd::Zero(xl, zl));
    it->second(static_cast<int>(completed(i, xc)) - 1, zcodes[idx(static_cast<int>(i))]) += 1.0;
  }
  double out = 0.0;
  for (const auto& [key, t] : tables) out += t.sum() / static_cast<double>(completed.rows()) * mi_from_table(t);
  return out;
}

OlsFit cross_block_regression(const Eigen::MatrixXd& completed, const Schema& schema, const GenConfig& cfg) {
  const int xc = column_of(schema, cfg.x.name), yc = column_of(schema, cfg.y.name), zc = column_of(schema, cfg.z.name);
  const Design zdesign(shared_schema(cfg), cfg.z.terms);
  const auto a = cfg.shared.size();
  OlsFit fit;
  fit.terms.push_back("(intercept)");
  for (int l = 2; l <= cfg.x.levels(); ++l) fit.terms.push_back(cfg.x.name + "=" + std::to_string(l));
  for (int l = 2; l <= cfg.y.levels(); ++l) fit.terms.push_back(cfg.y.name + "=" + std::to_string(l));
  for (std::size_t t = 1; t < cfg.z.terms.size(); ++t) fit.terms.push_back(cfg.z.terms.terms[t].label());

  const auto n = completed.rows();
  const auto p = static_cast<Eigen::Index>(fit.terms.size());
  Eigen::MatrixXd d(n, p);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    d(i, c++) = 1.0;
    for (int l = 2; l <= cfg.x.levels(); ++l) d(i, c++) = completed(i, xc) == l;
    for (int l = 2; l <= cfg.y.levels(); ++l) d(i, c++) = completed(i, yc) == l;
    const Eigen::VectorXd arow = completed.row(i).head(static_cast<Eigen::Index>(a)).transpose();
    const Eigen::VectorXd g = zdesign.evaluate({arow.data(), a});
    for (Eigen::Index t = 1; t < g.size(); ++t) d(i, c++) = g(t);
    z(i) = completed(i, zc);
  }
  if (n <= p) throw Error(ErrorCode::SingularPrecision, "regression needs more rows than terms");
  const Eigen::MatrixXd dtd_inv = spd_inverse(d.transpose() * d);
  fit.coef = dtd_inv * (d.transpose() * z);
  const double s2 = (z - d * fit.coef).squaredNorm() / static_cast<double>(n - p);
  fit.variance = s2 * dtd_inv.diagonal();
  fit.df = static_cast<int>(n - p);
  return fit;
}

void write_report_csv(std::ostream& out, const FusionReport& report) {
  out << "method,metric,value,mc_se\n";
  for (const auto& m : report.methods) {
    auto row = [&](const char* metric, double v, double se) {
      out << m.method << ',' << metric << ',' << format_double(v) << ',' << format_double(se) << '\n';
    };
    row("coverage", m.coverage, m.coverage_se);
    row("mean_abs_error", m.mean_abs_error, m.mean_abs_error_se);
    row("q25_abs_error", m.q25_abs_error, 0.0);
    row("q75_abs_error", m.q75_abs_error, 0.0);
    row("cross_zero_rate", m.cross_zero_rate, 0.0);
    row("cmi", m.cmi, 0.0);
  }
}

void write_regression_csv(std::ostream& out, const FusionReport& report) {
  out << "replication,method,term,cross,truth,estimate,lower,upper\n";
  for (const auto& r : report.regression)
    out << r.replication << ',' << r.method << ",\"" << r.term << "\"," << (r.cross ? 1 : 0) << ','
        << format_double(r.truth) << ',' << format_double(r.estimate) << ',' << format_double(r.lower) << ','
        << format_double(r.upper) << '\n';
}

nlohmann::json report_to_json(const FusionReport& report) {
  nlohmann::json methods = nlohmann::json::array(), reps = nlohmann::json::array(), reg = nlohmann::json::array();
  for (const auto& m : report.methods)
    methods.push_back({{"method", m.method},
                       {"coverage", m.coverage},
                       {"coverage_se", m.coverage_se},
                       {"mean_abs_error", m.mean_abs_error},
                       {"mean_abs_error_se", m.mean_abs_error_se},
                       {"q25_abs_error", m.q25_abs_error},
                       {"q75_abs_error", m.q75_abs_error},
                       {"cross_zero_rate", m.cross_zero_rate},
                       {"cmi", m.cmi}});
  for (const auto& m : report.per_replication)
    reps.push_back({{"replication", m.replication},
                    {"method", m.method},
                    {"coverage", m.coverage},
                    {"mean_abs_error", m.mean_abs_error},
                    {"q25_abs_error", m.q25_abs_error},
                    {"q75_abs_error", m.q75_abs_error},
                    {"cmi", m.cmi}});
  for (const auto& r : report.regression)
    reg.push_back({{"replication", r.replication},
                   {"method", r.method},
                   {"term", r.term},
                   {"cross", r.cross},
                   {"truth", r.truth},
                   {"estimate", r.estimate},
                   {"lower", r.lower},
                   {"upper", r.upper}});
  return {{"replications", report.replications},
          {"tracked_cells", report.tracked_cells},
          {"methods", methods},
          {"per_replication", reps},
          {"regression", reg}};
}

}  // namespace cmmmix
