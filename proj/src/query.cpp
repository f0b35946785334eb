#include "cmmmix/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "cmmmix/error.hpp"
#include "cmmmix/gower.hpp"
#include "cmmmix/linalg.hpp"
#include "cmmmix/random.hpp"

namespace cmmmix {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

void bad_query(const std::string& what) { throw Error(ErrorCode::InvalidQuery, what); }

std::vector<double> fixed_model_scale(const Model& model, std::span<const double> f) {
  const auto& fixed = model.layout().fixed;
  if (f.size() != fixed.size()) bad_query("expected " + std::to_string(fixed.size()) + " fixed values");
  std::vector<double> out(f.size());
  for (std::size_t l = 0; l < f.size(); ++l) {
    const auto col = idx(fixed[l]);
    const auto& spec = model.data().schema()[col];
    if (spec.categorical()) {
      if (f[l] != std::round(f[l]) || f[l] < 1 || f[l] > spec.levels)
        bad_query("fixed value of " + spec.name + " is not a level");
      out[l] = f[l];
    } else {
      out[l] = model.data().to_model(col, f[l]);
    }
  }
  return out;
}

void check_x(const Model& model, std::span<const int> x) {
  if (static_cast<int>(x.size()) != model.p_n()) bad_query("expected a value for every nominal variable");
  for (int j = 0; j < model.p_n(); ++j)
    if (x[idx(j)] < 1 || x[idx(j)] > model.nominal_levels(j)) bad_query("nominal level out of range");
}

double normal_cdf(double z) {
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
const std::pair<Eigen::VectorXd, Eigen::VectorXd>& legendre64() {
  static const auto rule = [] {
    constexpr int n = 64;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int a = 1; a < n; ++a) {
      const double b = a / std::sqrt(4.0 * a * a - 1.0);
      J(a, a - 1) = b;
      J(a - 1, a) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Eigen::VectorXd w = 2.0 * es.eigenvectors().row(0).transpose().array().square();
    return std::make_pair(Eigen::VectorXd(es.eigenvalues()), w);
  }();
  return rule;
}

/// Pr(a < W <= b) for a bivariate normal: the integral over z_1 of
/// phi(z_1) Pr(a_2 < W_2 <= b_2 | z_1), by 64-node Gauss-Legendre on panels
/// of width at most 1 that also break at the transitions of the inner
/// probability around every cutoff of the second variable. The band result
/// is rescaled by Phi-mass / quadrature-mass of the band, so the levels of
/// the second variable telescope to the exact band probability.
double bivariate_rectangle(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, const Eigen::Vector2d& a,
                           const Eigen::Vector2d& b, std::span<const double> cutoffs2) {
  constexpr double kTail = 10.0;
  const double s1 = std::sqrt(cov(0, 0)), s2 = std::sqrt(cov(1, 1));
  const double rho = cov(0, 1) / (s1 * s2);
  const double cs = s2 * std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double za = (a(0) - mean(0)) / s1, zb = (b(0) - mean(0)) / s1;
  const double mass = zb > 0 && za > 0 ? normal_cdf(-za) - normal_cdf(-zb) : normal_cdf(zb) - normal_cdf(za);
  const double lo = std::max(za, -kTail), hi = std::min(zb, kTail);
  if (!(hi > lo) || !(mass > 0)) return 0.0;

  std::vector<double> breaks = {lo, hi};
  for (double z = std::ceil(lo); z < hi; z += 1.0) breaks.push_back(z);
  if (std::abs(rho) > 1e-12) {
    const double width = cs / (std::abs(rho) * s2);
    for (double c : cutoffs2) {
      const double center = (c - mean(1)) / (rho * s2);
      for (double k : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
        const double z = center + k * width;
        if (z > lo && z < hi) breaks.push_back(z);
      }
    }
  }
  std::sort(breaks.begin(), breaks.end());
  const auto& [nodes, weights] = legendre64();
  double total = 0.0, weight_mass = 0.0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double pl = breaks[p], ph = breaks[p + 1];
    if (!(ph > pl)) continue;
    for (Eigen::Index t = 0; t < nodes.size(); ++t) {
      const double z1 = 0.5 * (pl + ph) + 0.5 * (ph - pl) * nodes(t);
      const double wt = 0.5 * (ph - pl) * weights(t) * std::exp(-0.5 * z1 * z1) / std::sqrt(2.0 * std::numbers::pi);
      const double cm = mean(1) + rho * s2 * z1;
      double inner;
      if (cs > 0.0) {
        const double ya = (a(1) - cm) / cs, yb = (b(1) - cm) / cs;
        inner = ya > 0 ? normal_cdf(-ya) - normal_cdf(-yb) : normal_cdf(yb) - normal_cdf(ya);
      } else {
        inner = (cm > a(1) && cm <= b(1)) ? 1.0 : 0.0;
      }
      total += wt * inner;
      weight_mass += wt;
    }
  }
  return total * (mass / weight_mass);
}

}  // namespace

LocalMixture local_mixture(const Model& model, const ModelState& state, std::span<const double> f) {
  const auto fm = fixed_model_scale(model, f);
  LocalMixture out;
  out.components = neighborhood(fm, state.locations, model.hyper().distance);
  if (out.components.empty()) throw Error(ErrorCode::EmptyNeighborhood, "no component within d* of the query point");
  out.weights = local_weights(out.components, state.sticks, state.log1m_sticks);
  return out;
}

Eigen::VectorXd design_at(const Model& model, std::span<const double> f, std::span<const int> x) {
  check_x(model, x);
  const auto fm = fixed_model_scale(model, f);
  std::vector<double> row(model.data().cols(), std::numeric_limits<double>::quiet_NaN());
  const auto& fixed = model.layout().fixed;
  for (std::size_t l = 0; l < fixed.size(); ++l) row[idx(fixed[l])] = fm[l];
  for (int j = 0; j < model.p_n(); ++j) row[idx(model.nominal_column(j))] = x[idx(j)];
  return model.design().evaluate(row);
}

double joint_conditional_density(const Model& model, const ModelState& state, const QueryPoint& q) {
  const int P = model.P();
  std::vector<int> x;
  for (const auto& v : q.x) {
    if (!v) bad_query("density needs every nominal value");
    x.push_back(*v);
  }
  if (static_cast<int>(q.latent.size()) != P) bad_query("density needs a value for every ordinal and continuous variable");
  Eigen::VectorXd w(P);
  double log_jacobian = 0.0;
  for (int r = 0; r < P; ++r) {
    if (r < model.p_o()) {
      w(r) = q.latent[idx(r)];
    } else {
      const auto col = idx(model.latent_column(r));
      w(r) = model.data().to_model(col, q.latent[idx(r)]);
      log_jacobian -= std::log(model.data().standardization(col).sd);
    }
  }
  const auto mix = local_mixture(model, state, q.f);
  const Eigen::VectorXd d = design_at(model, q.f, x);
  double total = 0.0;
  for (std::size_t t = 0; t < mix.components.size(); ++t) {
    const auto h = idx(mix.components[t]);
    const Eigen::VectorXd mean = (d.transpose() * state.beta[h]).transpose();
    double lp = GaussianFactor(state.sigma[h]).log_density(w, mean);
    for (int j = 0; j < model.p_n(); ++j) lp += std::log(state.psi[h][idx(j)](x[idx(j)] - 1));
    total += mix.weights[t] * std::exp(lp + log_jacobian);
  }
  return total;
}

double pr_x_given_f(const Model& model, const ModelState& state, std::span<const double> f,
                    std::span<const int> x) {
  check_x(model, x);
  const auto mix = local_mixture(model, state, f);
  double total = 0.0;
  for (std::size_t t = 0; t < mix.components.size(); ++t) {
    double prod = mix.weights[t];
    for (int j = 0; j < model.p_n(); ++j) prod *= state.psi[idx(mix.components[t])][idx(j)](x[idx(j)] - 1);
    total += prod;
  }
  return total;
}

Estimate pr_y_given_xf(const Model& model, const ModelState& state, std::span<const double> f,
                       std::span<const int> x, std::span<const int> y, int mc_samples, std::uint64_t seed) {
  const int po = model.p_o();
  if (po == 0) bad_query("the model has no ordinal random variables");
  if (static_cast<int>(y.size()) != po) bad_query("expected a level for every ordinal variable");
  Eigen::VectorXd lo(po), hi(po);
  for (int r = 0; r < po; ++r) {
    if (y[idx(r)] < 1 || y[idx(r)] > model.ordinal_levels(r)) bad_query("ordinal level out of range");
    std::tie(lo(r), hi(r)) = model.interval(r, y[idx(r)]);
  }
  if (po >= 3 && mc_samples < 2) bad_query("mc_samples must be at least 2");
  const auto mix = local_mixture(model, state, f);
  const Eigen::VectorXd d = design_at(model, f, x);
  Estimate out;
  double var = 0.0;
  for (std::size_t t = 0; t < mix.components.size(); ++t) {
    const auto h = idx(mix.components[t]);
    const Eigen::VectorXd mean = (d.transpose() * state.beta[h].leftCols(po)).transpose();
    const Eigen::MatrixXd cov = state.sigma[h].topLeftCorner(po, po);
    double p = 0.0;
    if (po == 1) {
      const double s = std::sqrt(cov(0, 0));
      const double za = (lo(0) - mean(0)) / s, zb = (hi(0) - mean(0)) / s;
      // difference of upper tails is more accurate when both bounds sit high
      p = za > 0 ? normal_cdf(-za) - normal_cdf(-zb) : normal_cdf(zb) - normal_cdf(za);
    } else if (po == 2) {
      p = bivariate_rectangle(mean, cov, lo, hi, model.hyper().cutoffs[1]);
    } else {
      Rng rng(seed, 0, StreamTag::Query, h);
      const Eigen::MatrixXd L = cholesky_lower(cov);
      const int pairs = mc_samples / 2;
      double sum = 0.0, sumsq = 0.0;
      Eigen::VectorXd z(po);
      for (int s = 0; s < pairs; ++s) {
        for (int r = 0; r < po; ++r) z(r) = draw_normal(rng);
        const Eigen::VectorXd e = L * z;
        double hits = 0.0;
        for (const Eigen::VectorXd& w : {Eigen::VectorXd(mean + e), Eigen::VectorXd(mean - e)}) {
          bool in = true;
          for (int r = 0; r < po && in; ++r) in = w(r) > lo(r) && w(r) <= hi(r);
          hits += in ? 0.5 : 0.0;
        }
        sum += hits;
        sumsq += hits * hits;
      }
      p = sum / pairs;
      const double v = pairs > 1 ? (sumsq - pairs * p * p) / (pairs - 1.0) / pairs : 0.0;
      var += mix.weights[t] * mix.weights[t] * std::max(0.0, v);
    }
    out.value += mix.weights[t] * p;
  }
  out.se = std::sqrt(var);
  return out;
}

std::vector<std::vector<int>> level_combinations(std::span<const int> levels) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(levels.size(), 1);
  for (;;) {
    out.push_back(cur);
    int pos = static_cast<int>(levels.size()) - 1;
    while (pos >= 0 && cur[idx(pos)] == levels[idx(pos)]) cur[idx(pos--)] = 1;
    if (pos < 0) break;
    ++cur[idx(pos)];
  }
  return out;
}

double marginalize_nominal(const Model& model, const ModelState& state, std::span<const double> f,
                           const std::vector<std::optional<int>>& x,
                           const std::function<double(std::span<const int>)>& functional) {
  const int pn = model.p_n();
  std::vector<std::optional<int>> given = x;
  if (given.empty()) given.assign(idx(pn), std::nullopt);
  if (static_cast<int>(given.size()) != pn) bad_query("nominal vector has the wrong length");
  std::vector<int> free;
  for (int j = 0; j < pn; ++j)
    if (!given[idx(j)]) free.push_back(j);
  std::vector<int> full(idx(pn));
  for (int j = 0; j < pn; ++j) full[idx(j)] = given[idx(j)].value_or(1);
  if (free.empty()) return functional(full);

  const auto mix = local_mixture(model, state, f);
  std::vector<Eigen::VectorXd> marginal;
  std::vector<int> levels;
  for (int j : free) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(model.nominal_levels(j));
    for (std::size_t t = 0; t < mix.components.size(); ++t)
      m += mix.weights[t] * state.psi[idx(mix.components[t])][idx(j)];
    marginal.push_back(m);
    levels.push_back(model.nominal_levels(j));
  }
  double total = 0.0;
  for (const auto& combo : level_combinations(levels)) {
    double w = 1.0;
    for (std::size_t a = 0; a < free.size(); ++a) {
      full[idx(free[a])] = combo[a];
      w *= marginal[a](combo[a] - 1);
    }
    if (w > 0.0) total += w * functional(full);
  }
  return total;
}

double evaluate_functional(const Model& model, const ModelState& state, const FunctionalSpec& spec) {
  const auto& q = spec.point;
  switch (spec.type) {
    case FunctionalType::PrX: {
      // Pr(X_S = x_S | f): the unspecified coordinates sum out exactly.
      std::vector<int> free, levels;
      std::vector<int> full(idx(model.p_n()), 1);
      for (int j = 0; j < model.p_n(); ++j) {
        if (idx(j) < q.x.size() && q.x[idx(j)]) {
          full[idx(j)] = *q.x[idx(j)];
        } else {
          free.push_back(j);
          levels.push_back(model.nominal_levels(j));
        }
      }
      if (free.empty()) return pr_x_given_f(model, state, q.f, full);
      double total = 0.0;
      for (const auto& combo : level_combinations(levels)) {
        for (std::size_t a = 0; a < free.size(); ++a) full[idx(free[a])] = combo[a];
        total += pr_x_given_f(model, state, q.f, full);
      }
      return total;
    }
    case FunctionalType::PrY:
      return marginalize_nominal(model, state, q.f, q.x, [&](std::span<const int> x) {
        return pr_y_given_xf(model, state, q.f, x, spec.y, spec.mc_samples, spec.seed).value;
      });
    case FunctionalType::JointDensity:
      return marginalize_nominal(model, state, q.f, q.x, [&](std::span<const int> x) {
        QueryPoint full = q;
        full.x.assign(x.begin(), x.end());
        return joint_conditional_density(model, state, full);
      });
  }
  return 0.0;
}

FunctionalSpec functional_from_json(const nlohmann::json& j, const Model& model) {
  FunctionalSpec spec;
  const auto type = j.value("type", std::string("pr_x"));
  if (type == "pr_x") {
    spec.type = FunctionalType::PrX;
  } else if (type == "pr_y") {
    spec.type = FunctionalType::PrY;
  } else if (type == "density") {
    spec.type = FunctionalType::JointDensity;
  } else {
    bad_query("unknown functional type " + type);
  }
  spec.label = j.value("label", type);
  spec.mc_samples = j.value("mc_samples", 100000);
  spec.seed = j.value("seed", std::uint64_t{1});
  const auto& schema = model.data().schema();
  auto lookup = [&](const nlohmann::json& obj, const std::string& name, bool required) -> std::optional<double> {
    if (obj.is_object() && obj.contains(name)) return obj.at(name).get<double>();
    if (required) bad_query("missing value for " + name);
    return std::nullopt;
  };
  const auto fj = j.value("f", nlohmann::json::object());
  for (int c : model.layout().fixed) spec.point.f.push_back(*lookup(fj, schema[idx(c)].name, true));
  const auto xj = j.value("x", nlohmann::json::object());
  for (int c : model.layout().random_nominal) {
    const auto v = lookup(xj, schema[idx(c)].name, false);
    spec.point.x.push_back(v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt);
  }
  if (spec.type == FunctionalType::PrY) {
    const auto yj = j.value("y", nlohmann::json::object());
    for (int c : model.layout().random_ordinal) spec.y.push_back(static_cast<int>(*lookup(yj, schema[idx(c)].name, true)));
  }
  if (spec.type == FunctionalType::JointDensity) {
    const auto wj = j.value("latent", nlohmann::json::object());
    for (int r = 0; r < model.P(); ++r)
      spec.point.latent.push_back(*lookup(wj, schema[idx(model.latent_column(r))].name, true));
  }
  for (const auto& [key, value] : fj.items())
    if (model.data().column_index(key) < 0) bad_query("unknown column " + key);
  return spec;
}

nlohmann::json functional_to_json(const FunctionalSpec& spec, const Model& model) {
  const auto& schema = model.data().schema();
  nlohmann::json j;
  j["type"] = spec.type == FunctionalType::PrX ? "pr_x" : spec.type == FunctionalType::PrY ? "pr_y" : "density";
  j["label"] = spec.label;
  nlohmann::json f = nlohmann::json::object(), x = nlohmann::json::object();
  const auto& fixed = model.layout().fixed;
  for (std::size_t l = 0; l < fixed.size(); ++l) f[schema[idx(fixed[l])].name] = spec.point.f[l];
  for (int jn = 0; jn < model.p_n(); ++jn)
    if (idx(jn) < spec.point.x.size() && spec.point.x[idx(jn)])
      x[schema[idx(model.nominal_column(jn))].name] = *spec.point.x[idx(jn)];
  j["f"] = f;
  j["x"] = x;
  if (spec.type == FunctionalType::PrY) {
    nlohmann::json y = nlohmann::json::object();
    for (int r = 0; r < model.p_o(); ++r) y[schema[idx(model.latent_column(r))].name] = spec.y[idx(r)];
    j["y"] = y;
    j["mc_samples"] = spec.mc_samples;
    j["seed"] = spec.seed;
  }
  if (spec.type == FunctionalType::JointDensity) {
    nlohmann::json w = nlohmann::json::object();
    for (int r = 0; r < model.P(); ++r) w[schema[idx(model.latent_column(r))].name] = spec.point.latent[idx(r)];
    j["latent"] = w;
  }
  return j;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::TooFewDraws, "no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - std::floor(h)) * (values[hi] - values[lo]);
}

PosteriorSummary summarize_values(std::vector<double> values, double level) {
  if (values.size() < 10)
    throw Error(ErrorCode::TooFewDraws, "need at least 10 draws, have " + std::to_string(values.size()));
  if (!(level > 0.0 && level < 1.0)) bad_query("credible level must be in (0, 1)");
  PosteriorSummary s;
  s.level = level;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.lower = quantile_type7(values, 0.5 * (1.0 - level));
  s.upper = quantile_type7(values, 0.5 * (1.0 + level));
  s.values = std::move(values);
  return s;
}

PosteriorSummary summarize_over_draws(const std::vector<ModelState>& draws,
                                      const std::function<double(const ModelState&)>& functional,
                                      double level) {
  if (draws.size() < 10)
    throw Error(ErrorCode::TooFewDraws, "need at least 10 draws, have " + std::to_string(draws.size()));
  std::vector<double> values;
  values.reserve(draws.size());
  for (const auto& s : draws) values.push_back(functional(s));
  return summarize_values(std::move(values), level);
}

RubinResult rubin_combine(std::span<const double> estimates, std::span<const double> within,
                          const RubinOptions& options) {
  const auto m = estimates.size();
  if (m < 2) bad_query("combining rules need at least two imputations");
  if (within.size() != m) bad_query("estimates and variances differ in length");
  const double md = static_cast<double>(m);
  RubinResult r;
  r.estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / md;
  r.within = std::accumulate(within.begin(), within.end(), 0.0) / md;
  for (double q : estimates) r.between += (q - r.estimate) * (q - r.estimate);
  r.between /= md - 1.0;
  const double inflated = (1.0 + 1.0 / md) * r.between;
  r.total = r.within + inflated;
  r.df = inflated > 0.0 ? (md - 1.0) * std::pow(1.0 + r.within / inflated, 2)
                        : std::numeric_limits<double>::infinity();
  if (options.complete_df && std::isfinite(r.df) && r.total > 0.0) {
    const double vc = *options.complete_df;
    const double gamma = inflated / r.total;
    const double vobs = (vc + 1.0) / (vc + 3.0) * vc * (1.0 - gamma);
    r.df = 1.0 / (1.0 / r.df + 1.0 / vobs);
  }
  const double alpha = 1.0 - options.level;
  double crit;
  if (std::isfinite(r.df)) {
    crit = boost::math::quantile(boost::math::students_t_distribution<double>(r.df), 1.0 - alpha / 2.0);
  } else {
    crit = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
  }
  const double half = crit * std::sqrt(r.total);
  r.lower = r.estimate - half;
  r.upper = r.estimate + half;
  return r;
}

}  // namespace cmmmix
