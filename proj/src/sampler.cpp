#include "cmmmix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "cmmmix/error.hpp"

namespace cmmmix {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

/// D_i beta_h as a column vector.
Eigen::VectorXd kernel_mean(const ModelState& s, int i, int h) {
  return (s.design.row(i) * s.beta[idx(h)]).transpose();
}

double kernel_log_density(const ModelState& s, const ComponentCache& cache, int i, int h) {
  const Eigen::VectorXd resid = s.latent.row(i).transpose() - kernel_mean(s, i, h);
  return cache.factor[idx(h)].log_density_residual(resid);
}

double nominal_log_mass(const Model& model, const ModelState& s, const ComponentCache& cache,
                        int i, int h) {
  double out = 0.0;
  for (int j = 0; j < model.p_n(); ++j)
    out += cache.log_psi[idx(h)][idx(j)](static_cast<int>(s.completed(i, model.nominal_column(j))) - 1);
  return out;
}

TruncatedNormalLaw latent_law(const Model& model, const ModelState& s, const ComponentCache& cache,
                              int i, int r, const Eigen::VectorXd& mu) {
  const int h = s.alloc[idx(i)];
  const auto& cw = cache.coord[idx(h)][idx(r)];
  double m = mu(r);
  for (int t = 0; t < model.P(); ++t)
    if (t != r) m += cw.weights(t) * (s.latent(i, t) - mu(t));
  TruncatedNormalLaw law{m, std::sqrt(cw.variance), -kInf, kInf};
  if (r < model.p_o()) {
    const int col = model.latent_column(r);
    if (!model.data().missing(idx(i), idx(col))) {
      const auto [lo, hi] = model.interval(r, static_cast<int>(model.data().value(idx(i), idx(col))));
      law.lower = lo;
      law.upper = hi;
    }
  }
  return law;
}

std::vector<int> visiting_order(int count, std::uint64_t seed, std::int64_t sweep, std::uint64_t which,
                                bool permute) {
  std::vector<int> order(idx(count));
  std::iota(order.begin(), order.end(), 0);
  if (permute) {
    Rng rng(seed, static_cast<std::uint64_t>(sweep), StreamTag::Order, which);
    for (int a = count - 1; a > 0; --a) {
      const int b = std::min(a, static_cast<int>(rng.uniform() * (a + 1)));
      std::swap(order[idx(a)], order[idx(b)]);
    }
  }
  return order;
}

std::uint64_t key(std::int64_t sweep) { return static_cast<std::uint64_t>(sweep); }

void insert_sorted(std::vector<int>& v, int h) {
  auto it = std::lower_bound(v.begin(), v.end(), h);
  if (it == v.end() || *it != h) v.insert(it, h);
}

void erase_sorted(std::vector<int>& v, int h) {
  auto it = std::lower_bound(v.begin(), v.end(), h);
  if (it != v.end() && *it == h) v.erase(it);
}

double draw_from_location_law(Rng& rng, const LocationLaw& law) {
  if (!law.continuous) {
    const auto pick = draw_categorical_log(rng, law.log_weights);
    return law.values[pick];
  }
  const std::size_t segs = law.log_weights.size();
  std::vector<double> lw(segs, -kInf);
  bool any_length = false;
  for (std::size_t s = 0; s < segs; ++s) {
    const double len = law.values[s + 1] - law.values[s];
    if (len > 0.0 && law.log_weights[s] > -kInf) {
      lw[s] = std::log(len) + law.log_weights[s];
      any_length = true;
    }
  }
  if (!any_length) {
    // Feasible set of measure zero: a single point.
    for (std::size_t s = 0; s < segs; ++s)
      if (law.log_weights[s] > -kInf) return law.values[s];
    return law.values.front();
  }
  const auto s = draw_categorical_log(rng, lw);
  const double a = law.values[s], b = law.values[s + 1];
  return a + (b - a) * rng.uniform();
}

}  // namespace

double LocationLaw::log_density(double x) const {
  if (!continuous) {
    for (std::size_t v = 0; v < values.size(); ++v)
      if (values[v] == x) return log_weights[v];
    return -kInf;
  }
  if (values.empty() || x < values.front() || x > values.back()) return -kInf;
  for (std::size_t s = 0; s + 1 < values.size(); ++s)
    if (x <= values[s + 1]) return log_weights[s];
  return log_weights.back();
}

ComponentCache build_component_cache(const Model& model, const ModelState& s) {
  ComponentCache c;
  const int N = model.N(), P = model.P();
  c.factor.reserve(idx(N));
  c.coord.resize(idx(N));
  c.log_psi.resize(idx(N));
  for (int h = 0; h < N; ++h) {
    c.factor.emplace_back(s.sigma[idx(h)]);
    for (int r = 0; r < P; ++r) c.coord[idx(h)].push_back(conditional_weights(s.sigma[idx(h)], r));
    for (const auto& p : s.psi[idx(h)]) c.log_psi[idx(h)].push_back(p.array().log().matrix());
  }
  return c;
}

std::vector<std::vector<int>> component_members(const ModelState& s, int N) {
  std::vector<std::vector<int>> out(idx(N));
  for (std::size_t i = 0; i < s.alloc.size(); ++i) out[idx(s.alloc[i])].push_back(static_cast<int>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Conditionals

TruncatedNormalLaw latent_conditional(const Model& model, const ModelState& s,
                                      const ComponentCache& cache, int i, int r) {
  return latent_law(model, s, cache, i, r, kernel_mean(s, i, s.alloc[idx(i)]));
}

CategoricalLaw nominal_conditional(const Model& model, const ModelState& s,
                                   const ComponentCache& cache, int i, int j) {
  const int h = s.alloc[idx(i)];
  const int col = model.nominal_column(j);
  const int d = model.nominal_levels(j);
  CategoricalLaw law;
  std::vector<double> row(s.row(i).begin(), s.row(i).end());
  Eigen::VectorXd dvec(model.k());
  for (int l = 1; l <= d; ++l) {
    law.support.push_back(l);
    double lw = cache.log_psi[idx(h)][idx(j)](l - 1);
    if (model.design_uses_nominal(j)) {
      row[idx(col)] = l;
      model.design().evaluate(row, {dvec.data(), idx(model.k())});
      const Eigen::VectorXd resid =
          s.latent.row(i).transpose() - (dvec.transpose() * s.beta[idx(h)]).transpose();
      lw += cache.factor[idx(h)].log_density_residual(resid);
    }
    law.log_weights.push_back(lw);
  }
  return law;
}

CategoricalLaw allocation_conditional(const Model& model, const ModelState& s,
                                      const ComponentCache& cache, int i) {
  const auto& eta = s.eta[idx(i)];
  if (eta.empty()) throw Error(ErrorCode::EmptyNeighborhood, "row " + std::to_string(i));
  CategoricalLaw law;
  law.support = eta;
  law.log_weights = local_log_weights(eta, s.sticks, s.log1m_sticks);
  for (std::size_t l = 0; l < eta.size(); ++l)
    law.log_weights[l] += kernel_log_density(s, cache, i, eta[l]) + nominal_log_mass(model, s, cache, i, eta[l]);
  return law;
}

std::vector<BetaLaw> stick_conditionals(const Model& model, const ModelState& s) {
  std::vector<BetaLaw> out(idx(model.N()), BetaLaw{1.0, s.alpha});
  for (int i = 0; i < model.n(); ++i) {
    const auto& eta = s.eta[idx(i)];
    const int h = s.alloc[idx(i)];
    if (h != eta.back()) out[idx(h)].a += 1.0;
    for (int g : eta) {
      if (g >= h) break;
      out[idx(g)].b += 1.0;
    }
  }
  return out;
}

LocationLaw location_conditional(const Model& model, const ModelState& s, int h, int l,
                                 const std::vector<int>& members, LocationUpdate mode) {
  const auto& spec = model.hyper().distance;
  const auto& var = model.location_support(l);
  const double wl = spec.weights[idx(l)];
  const int q = model.q();
  LocationLaw law;
  law.continuous = var.kind == Kind::Continuous;

  auto uniform_prior = [&] {
    if (law.continuous) {
      law.values = {var.lower, var.upper};
      law.log_weights = {0.0};
    } else {
      for (int v = 1; v <= var.levels; ++v) {
        law.values.push_back(v);
        law.log_weights.push_back(0.0);
      }
    }
    return law;
  };
  if (wl == 0.0 || spec.dstar >= 1.0) return uniform_prior();
  if (mode == LocationUpdate::MembersOnly && members.empty()) return uniform_prior();

  // Rows whose factor depends on this coordinate: members (hard constraint)
  // and, in exact mode, rows whose local stick weight changes with h's
  // membership in their neighborhood.
  struct Row {
    int i;
    bool member;
    double in_weight;  ///< log factor when inside d*, relative to outside
    double rest;       ///< distance contribution of the other coordinates
  };
  std::vector<Row> rows;
  for (int i : members) rows.push_back({i, true, 0.0, 0.0});
  if (mode == LocationUpdate::Exact) {
    for (int i = 0; i < model.n(); ++i) {
      const int g = s.alloc[idx(i)];
      if (g == h) continue;
      if (h < g) {
        rows.push_back({i, false, s.log1m_sticks(h), 0.0});
      } else {
        const auto& eta = s.eta[idx(i)];
        auto above = static_cast<long>(eta.end() - std::upper_bound(eta.begin(), eta.end(), g));
        if (std::binary_search(eta.begin(), eta.end(), h)) --above;
        if (above == 0) rows.push_back({i, false, std::log(s.sticks(g)), 0.0});
      }
    }
  }
  for (auto& row : rows) {
    double d = 0.0;
    for (int j = 0; j < q; ++j) {
      if (j == l || spec.weights[idx(j)] == 0.0) continue;
      d += spec.weights[idx(j)] *
           component_distance(spec.variables[idx(j)], model.fixed()(row.i, j), s.locations(h, j));
    }
    row.rest = d;
  }

  if (!law.continuous) {
    for (int v = 1; v <= var.levels; ++v) {
      double lw = 0.0;
      for (const auto& row : rows) {
        const double d = row.rest + wl * component_distance(var, model.fixed()(row.i, l), v);
        const bool inside = d <= spec.dstar;
        if (row.member && !inside) {
          lw = -kInf;
          break;
        }
        if (!row.member && inside) lw += row.in_weight;
      }
      law.values.push_back(v);
      law.log_weights.push_back(lw);
    }
    if (std::all_of(law.log_weights.begin(), law.log_weights.end(), [](double x) { return x == -kInf; }))
      throw Error(ErrorCode::EmptyInterval, "no feasible level for component " + std::to_string(h));
    return law;
  }

  // Continuous: each row is inside on |f - x| <= range (d* - rest) / w.
  const double range = var.range();
  double lo = var.lower, hi = var.upper;
  std::vector<std::pair<double, double>> events;
  for (const auto& row : rows) {
    const double slack = spec.dstar - row.rest;
    const double f = model.fixed()(row.i, l);
    if (row.member) {
      if (slack < 0.0) throw Error(ErrorCode::EmptyInterval, "member outside d*");
      const double half = range * slack / wl;
      lo = std::max(lo, f - half);
      hi = std::min(hi, f + half);
    } else if (slack >= 0.0) {
      const double half = range * slack / wl;
      events.push_back({f - half, row.in_weight});
      events.push_back({f + half, -row.in_weight});
    }
  }
  if (lo > hi) throw Error(ErrorCode::EmptyInterval, "member intervals do not intersect");
  std::vector<std::pair<double, double>> clipped;
  for (std::size_t e = 0; e < events.size(); e += 2) {
    const double a = std::max(events[e].first, lo), b = std::min(events[e + 1].first, hi);
    if (a > b) continue;
    clipped.push_back({a, events[e].second});
    clipped.push_back({b, events[e + 1].second});
  }
  std::sort(clipped.begin(), clipped.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  law.values.push_back(lo);
  for (const auto& e : clipped)
    if (e.first > law.values.back() && e.first < hi) law.values.push_back(e.first);
  if (hi > law.values.back() || law.values.size() == 1) law.values.push_back(hi);
  std::size_t e = 0;
  double cur = 0.0;
  for (std::size_t seg = 0; seg + 1 < law.values.size(); ++seg) {
    while (e < clipped.size() && clipped[e].first <= law.values[seg]) cur += clipped[e++].second;
    law.log_weights.push_back(cur);
  }
  return law;
}

NormalLaw beta_column_conditional(const Model& model, const ModelState& s, int h, int r,
                                  const std::vector<int>& members) {
  const int k = model.k(), P = model.P();
  NormalLaw law;
  if (members.empty()) {
    law.mean = s.beta0.col(r);
    law.cov = s.tau2.asDiagonal();
    return law;
  }
  const auto& beta = s.beta[idx(h)];
  const ConditionalWeights cw = conditional_weights(s.sigma[idx(h)], r);
  const auto M = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd D(M, k);
  Eigen::VectorXd y(M);
  for (Eigen::Index a = 0; a < M; ++a) {
    const int i = members[idx(static_cast<int>(a))];
    D.row(a) = s.design.row(i);
    double adj = 0.0;
    for (int t = 0; t < P; ++t)
      if (t != r) adj += cw.weights(t) * (s.latent(i, t) - s.design.row(i).dot(beta.col(t)));
    y(a) = s.latent(i, r) - adj;
  }
  const Eigen::VectorXd tinv = s.tau2.cwiseInverse();
  Eigen::MatrixXd Q = D.transpose() * D / cw.variance;
  Q.diagonal() += tinv;
  const Eigen::VectorXd b = tinv.cwiseProduct(s.beta0.col(r)) + D.transpose() * y / cw.variance;
  law.cov = spd_inverse(Q);
  law.mean = Q.llt().solve(b);
  return law;
}

WishartLaw sigma_conditional(const Model& model, const ModelState& s, int h,
                             const std::vector<int>& members) {
  WishartLaw law{model.hyper().nu + static_cast<double>(members.size()), s.scale};
  for (int i : members) {
    const Eigen::VectorXd e = s.latent.row(i).transpose() - kernel_mean(s, i, h);
    law.scale += e * e.transpose();
  }
  return law;
}

DirichletLaw psi_conditional(const Model& model, const ModelState& s, int /*h*/, int j,
                             const std::vector<int>& members) {
  const auto& a = model.hyper().dirichlet[idx(j)];
  DirichletLaw law{Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()))};
  const int col = model.nominal_column(j);
  for (int i : members) law.concentration(static_cast<int>(s.completed(i, col)) - 1) += 1.0;
  return law;
}

GammaLaw alpha_conditional(const Model& model, const ModelState& s) {
  double sum_log = 0.0;
  for (int h = 0; h < model.N(); ++h) sum_log += s.log1m_sticks(h);
  return {model.hyper().a_alpha + model.N(), model.hyper().b_alpha - sum_log, 0.0};
}

NormalLaw beta0_conditional(const Model& model, const ModelState& s, int m, int r) {
  const double N = model.N();
  double sum = 0.0;
  for (int h = 0; h < model.N(); ++h) sum += s.beta[idx(h)](m, r);
  const double var = 1.0 / (1.0 / model.hyper().h + N / s.tau2(m));
  NormalLaw law;
  law.mean = Eigen::VectorXd::Constant(1, var * sum / s.tau2(m));
  law.cov = Eigen::MatrixXd::Constant(1, 1, var);
  return law;
}

GammaLaw tau2_precision_conditional(const Model& model, const ModelState& s, int m) {
  const auto& hp = model.hyper();
  double ss = 0.0;
  for (int h = 0; h < model.N(); ++h)
    for (int r = 0; r < model.P(); ++r) {
      const double e = s.beta[idx(h)](m, r) - s.beta0(m, r);
      ss += e * e;
    }
  return {hp.a_tau + 0.5 * model.N() * model.P(), hp.b_tau + 0.5 * ss,
          std::isinf(hp.tau2_max) ? 0.0 : 1.0 / hp.tau2_max};
}

WishartLaw scale_conditional(const Model& model, const ModelState& s) {
  const auto& hp = model.hyper();
  Eigen::MatrixXd prec = spd_inverse(hp.b_s);
  for (int h = 0; h < model.N(); ++h) prec += spd_inverse(s.sigma[idx(h)]);
  return {model.N() * hp.nu + hp.a_s, spd_inverse(prec)};
}

// ---------------------------------------------------------------------------
// Updates

void update_latents(const Model& model, ModelState& s, const ComponentCache& cache, int i,
                    std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Latent, idx(i));
  const Eigen::VectorXd mu = kernel_mean(s, i, s.alloc[idx(i)]);
  const auto& data = model.data();
  for (int r = 0; r < model.P(); ++r) {
    const int col = model.latent_column(r);
    const bool observed = !data.missing(idx(i), idx(col));
    if (r >= model.p_o() && observed) continue;
    const auto law = latent_law(model, s, cache, i, r, mu);
    const double w = draw_truncated_normal(rng, law.mean, law.sd, law.lower, law.upper);
    s.latent(i, r) = w;
    if (!observed) s.completed(i, col) = r < model.p_o() ? model.level_of(r, w) : w;
  }
}

void impute_nominal(const Model& model, ModelState& s, const ComponentCache& cache, int i,
                    std::uint64_t seed) {
  bool changed = false;
  for (int j = 0; j < model.p_n(); ++j) {
    const int col = model.nominal_column(j);
    if (!model.data().missing(idx(i), idx(col))) continue;
    Rng rng(seed, key(s.sweep), StreamTag::Nominal, idx(i), idx(j));
    const auto law = nominal_conditional(model, s, cache, i, j);
    s.completed(i, col) = law.support[draw_categorical_log(rng, law.log_weights)];
    changed = changed || model.design_uses_nominal(j);
  }
  if (changed) refresh_design_row(model, s, i);
}

void update_allocation(const Model& model, ModelState& s, const ComponentCache& cache, int i,
                       std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Allocation, idx(i));
  const auto law = allocation_conditional(model, s, cache, i);
  s.alloc[idx(i)] = law.support[draw_categorical_log(rng, law.log_weights)];
}

void update_sticks(const Model& model, ModelState& s, std::uint64_t seed) {
  const auto laws = stick_conditionals(model, s);
  for (int h = 0; h < model.N(); ++h) {
    Rng rng(seed, key(s.sweep), StreamTag::Stick, idx(h));
    set_stick(s, h, draw_log_beta(rng, laws[idx(h)].a, laws[idx(h)].b));
  }
}

void update_location(const Model& model, ModelState& s, int h, const std::vector<int>& members,
                     std::uint64_t seed, LocationUpdate mode) {
  if (model.q() == 0) return;
  Rng rng(seed, key(s.sweep), StreamTag::Location, idx(h));
  const auto& spec = model.hyper().distance;
  if (spec.dstar >= 1.0 || (mode == LocationUpdate::MembersOnly && members.empty())) {
    draw_location_prior(model, rng, s.locations.row(h));
  } else {
    for (int l = 0; l < model.q(); ++l) {
      const auto law = location_conditional(model, s, h, l, members, mode);
      s.locations(h, l) = draw_from_location_law(rng, law);
    }
  }
  std::vector<double> f(idx(model.q())), g(idx(model.q()));
  for (int l = 0; l < model.q(); ++l) g[idx(l)] = s.locations(h, l);
  for (int i = 0; i < model.n(); ++i) {
    for (int l = 0; l < model.q(); ++l) f[idx(l)] = model.fixed()(i, l);
    const bool inside = spec.dstar >= 1.0 || gower_distance(f, g, spec) <= spec.dstar;
    if (inside)
      insert_sorted(s.eta[idx(i)], h);
    else
      erase_sorted(s.eta[idx(i)], h);
  }
}

void update_locations(const Model& model, ModelState& s, std::uint64_t seed,
                      const SamplerOptions& options) {
  if (model.q() == 0) return;
  const auto members = component_members(s, model.N());
  for (int h : visiting_order(model.N(), seed, s.sweep, 1, options.permute_order))
    update_location(model, s, h, members[idx(h)], seed, options.location_update);
}

void update_beta(const Model& model, ModelState& s, int h, const std::vector<int>& members,
                 std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Beta, idx(h));
  const int k = model.k(), P = model.P();
  auto& beta = s.beta[idx(h)];
  if (members.empty()) {
    for (int r = 0; r < P; ++r)
      for (int m = 0; m < k; ++m) beta(m, r) = s.beta0(m, r) + std::sqrt(s.tau2(m)) * draw_normal(rng);
    return;
  }
  const auto M = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd D(M, k);
  for (Eigen::Index a = 0; a < M; ++a) D.row(a) = s.design.row(members[idx(static_cast<int>(a))]);
  const Eigen::MatrixXd DtD = D.transpose() * D;
  const Eigen::VectorXd tinv = s.tau2.cwiseInverse();
  Eigen::VectorXd y(M);
  for (int r = 0; r < P; ++r) {
    const ConditionalWeights cw = conditional_weights(s.sigma[idx(h)], r);
    for (Eigen::Index a = 0; a < M; ++a) {
      const int i = members[idx(static_cast<int>(a))];
      double adj = 0.0;
      for (int t = 0; t < P; ++t)
        if (t != r) adj += cw.weights(t) * (s.latent(i, t) - D.row(a).dot(beta.col(t)));
      y(a) = s.latent(i, r) - adj;
    }
    Eigen::MatrixXd Q = DtD / cw.variance;
    Q.diagonal() += tinv;
    const Eigen::VectorXd b = tinv.cwiseProduct(s.beta0.col(r)) + D.transpose() * y / cw.variance;
    const Eigen::MatrixXd L = cholesky_lower(Q, ErrorCode::SingularPrecision);
    const Eigen::VectorXd mean =
        L.transpose().triangularView<Eigen::Upper>().solve(L.triangularView<Eigen::Lower>().solve(b));
    Eigen::VectorXd z(k);
    for (int m = 0; m < k; ++m) z(m) = draw_normal(rng);
    beta.col(r) = mean + L.transpose().triangularView<Eigen::Upper>().solve(z);
  }
}

void update_sigma(const Model& model, ModelState& s, int h, const std::vector<int>& members,
                  std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Sigma, idx(h));
  const auto law = sigma_conditional(model, s, h, members);
  s.sigma[idx(h)] = draw_inverse_wishart(rng, law.df, law.scale);
}

void update_psi(const Model& model, ModelState& s, int h, const std::vector<int>& members,
                std::uint64_t seed) {
  for (int j = 0; j < model.p_n(); ++j) {
    Rng rng(seed, key(s.sweep), StreamTag::Psi, idx(h), idx(j));
    const auto law = psi_conditional(model, s, h, j, members);
    s.psi[idx(h)][idx(j)] = draw_dirichlet(rng, {law.concentration.data(), idx(static_cast<int>(law.concentration.size()))});
  }
}

void update_alpha(const Model& model, ModelState& s, std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Alpha, 0);
  const auto law = alpha_conditional(model, s);
  s.alpha = draw_gamma(rng, law.shape, law.rate);
}

void update_beta0(const Model& model, ModelState& s, std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Beta0, 0);
  for (int r = 0; r < model.P(); ++r)
    for (int m = 0; m < model.k(); ++m) {
      const auto law = beta0_conditional(model, s, m, r);
      s.beta0(m, r) = draw_normal(rng, law.mean(0), std::sqrt(law.cov(0, 0)));
    }
}

void update_tau2(const Model& model, ModelState& s, std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Tau2, 0);
  for (int m = 0; m < model.k(); ++m) {
    const auto law = tau2_precision_conditional(model, s, m);
    const double prec = draw_gamma_lower_truncated(rng, law.shape, law.rate, law.minimum);
    s.tau2(m) = std::min(1.0 / prec, model.hyper().tau2_max);
  }
}

void update_scale(const Model& model, ModelState& s, std::uint64_t seed) {
  Rng rng(seed, key(s.sweep), StreamTag::Scale, 0);
  const auto law = scale_conditional(model, s);
  s.scale = draw_wishart(rng, law.df, law.scale);
}

namespace {

void update_atoms_and_hyper(const Model& model, ModelState& s, std::uint64_t seed) {
  const auto members = component_members(s, model.N());
  for (int h = 0; h < model.N(); ++h) {
    update_beta(model, s, h, members[idx(h)], seed);
    update_sigma(model, s, h, members[idx(h)], seed);
    update_psi(model, s, h, members[idx(h)], seed);
  }
  update_beta0(model, s, seed);
  update_tau2(model, s, seed);
  update_scale(model, s, seed);
  update_alpha(model, s, seed);
}

}  // namespace

void gibbs_sweep(const Model& model, ModelState& s, std::uint64_t seed, const SamplerOptions& options) {
  ++s.sweep;
  const auto cache = build_component_cache(model, s);
  const auto rows = visiting_order(model.n(), seed, s.sweep, 0, options.permute_order);
  for (int i : rows) {
    update_latents(model, s, cache, i, seed);
    impute_nominal(model, s, cache, i, seed);
  }
  for (int i : rows) update_allocation(model, s, cache, i, seed);
  update_sticks(model, s, seed);
  update_locations(model, s, seed, options);
  update_atoms_and_hyper(model, s, seed);
}

void reference_dp_sweep(const Model& model, ModelState& s, std::uint64_t seed) {
  ++s.sweep;
  const int N = model.N(), n = model.n();
  const auto cache = build_component_cache(model, s);
  for (int i = 0; i < n; ++i) {
    update_latents(model, s, cache, i, seed);
    impute_nominal(model, s, cache, i, seed);
  }

  // Global stick-breaking weights p_h = V_h prod_{g<h}(1 - V_g), p_N the remainder.
  std::vector<double> log_p(idx(N));
  double log_rest = 0.0;
  for (int h = 0; h < N; ++h) {
    if (h + 1 == N) {
      log_p[idx(h)] = log_rest;
    } else {
      log_p[idx(h)] = std::log(s.sticks(h)) + log_rest;
      log_rest += s.log1m_sticks(h);
    }
  }
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, key(s.sweep), StreamTag::Allocation, idx(i));
    std::vector<double> lw(idx(N));
    for (int h = 0; h < N; ++h)
      lw[idx(h)] = log_p[idx(h)] + kernel_log_density(s, cache, i, h) + nominal_log_mass(model, s, cache, i, h);
    s.alloc[idx(i)] = static_cast<int>(draw_categorical_log(rng, lw));
  }

  std::vector<double> a(idx(N), 1.0), b(idx(N), s.alpha);
  for (int i = 0; i < n; ++i) {
    const int h = s.alloc[idx(i)];
    if (h != N - 1) a[idx(h)] += 1.0;
    for (int g = 0; g < h; ++g) b[idx(g)] += 1.0;
  }
  for (int h = 0; h < N; ++h) {
    Rng rng(seed, key(s.sweep), StreamTag::Stick, idx(h));
    set_stick(s, h, draw_log_beta(rng, a[idx(h)], b[idx(h)]));
  }

  if (model.q() > 0)
    for (int h = 0; h < N; ++h) {
      Rng rng(seed, key(s.sweep), StreamTag::Location, idx(h));
      draw_location_prior(model, rng, s.locations.row(h));
    }

  update_atoms_and_hyper(model, s, seed);
}

// ---------------------------------------------------------------------------
// Chains

void validate_chain_config(const ChainConfig& cfg) {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::InvalidChainConfig, w); };
  if (cfg.iterations < 1) bad("iterations must be positive");
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations) bad("burn_in must be in [0, iterations)");
  if (cfg.thin < 1) bad("thin must be at least 1");
  if (cfg.completions < 1) bad("at least one completed dataset is required");
  if (cfg.completions > cfg.iterations - cfg.burn_in) bad("more completed datasets than post-burn-in sweeps");
}

std::vector<std::int64_t> completion_schedule(const ChainConfig& cfg) {
  const std::int64_t post = cfg.iterations - cfg.burn_in;
  const std::int64_t m = cfg.completions;
  std::vector<std::int64_t> out;
  for (std::int64_t j = 1; j <= m; ++j) out.push_back(cfg.burn_in + (j * post + m - 1) / m);
  return out;
}

Eigen::MatrixXd completed_original(const Model& model, const ModelState& s) {
  Eigen::MatrixXd out = s.completed;
  const auto& data = model.data();
  for (std::size_t c = 0; c < data.cols(); ++c)
    if (data.schema()[c].kind == Kind::Continuous)
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        out(i, static_cast<Eigen::Index>(c)) = data.to_original(c, out(i, static_cast<Eigen::Index>(c)));
  return out;
}

Draws run_chain(const Model& model, const ChainConfig& cfg,
                const std::function<void(const ModelState&)>& on_sweep) {
  validate_chain_config(cfg);
  Draws draws;
  ModelState s = init_state(model, cfg.seed);
  const auto schedule = completion_schedule(cfg);
  std::size_t next_completion = 0;
  try {
    for (int t = 1; t <= cfg.iterations; ++t) {
      gibbs_sweep(model, s, cfg.seed, cfg.options);
      TraceRow row;
      row.sweep = s.sweep;
      row.alpha = s.alpha;
      row.tau2 = s.tau2;
      std::vector<bool> used(idx(model.N()), false);
      for (int h : s.alloc) used[idx(h)] = true;
      row.active = static_cast<int>(std::count(used.begin(), used.end(), true));
      draws.trace.push_back(std::move(row));
      if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
        ModelState snap = s;
        if (!cfg.keep_rows) {
          snap.latent.resize(0, 0);
          snap.completed.resize(0, 0);
          snap.design.resize(0, 0);
          snap.eta.clear();
        }
        draws.snapshots.push_back(std::move(snap));
        draws.snapshot_sweeps.push_back(t);
      }
      while (next_completion < schedule.size() && schedule[next_completion] == t) {
        draws.completed.push_back(completed_original(model, s));
        draws.completion_sweeps.push_back(t);
        ++next_completion;
      }
      if (on_sweep) on_sweep(s);
    }
  } catch (...) {
    if (cfg.checkpoint) save_checkpoint(*cfg.checkpoint, s);
    throw;
  }
  if (cfg.checkpoint) save_checkpoint(*cfg.checkpoint, s);

  std::vector<bool> used(idx(model.N()), false);
  for (int h : s.alloc) used[idx(h)] = true;
  for (int i = 0; i < model.n(); ++i) {
    const auto& eta = s.eta[idx(i)];
    if (std::all_of(eta.begin(), eta.end(), [&](int h) { return used[idx(h)]; })) {
      draws.warnings.push_back("truncation pressure: every component available to row " +
                               std::to_string(i) + " is occupied; consider a larger N");
      break;
    }
  }
  return draws;
}

std::vector<Draws> run_chains(const Model& model, const ChainConfig& cfg, int chains, int threads) {
  if (chains < 1) throw Error(ErrorCode::InvalidChainConfig, "at least one chain is required");
  validate_chain_config(cfg);
  std::vector<Draws> out(idx(chains));
  std::vector<std::exception_ptr> errors(idx(chains));
  auto work = [&](int c) {
    try {
      ChainConfig local = cfg;
      local.seed = derive_seed(cfg.seed, StreamTag::Chain, idx(c));
      if (cfg.checkpoint)
        local.checkpoint = cfg.checkpoint->string() + "." + std::to_string(c);
      out[idx(c)] = run_chain(model, local);
    } catch (...) {
      errors[idx(c)] = std::current_exception();
    }
  };
  threads = std::max(1, std::min(threads, chains));
  if (threads == 1) {
    for (int c = 0; c < chains; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int c = t; c < chains; c += threads) work(c);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const auto m = chains.size();
  if (m < 2) throw Error(ErrorCode::InvalidChainConfig, "need at least two chains");
  const auto n = chains.front().size();
  if (n < 2) throw Error(ErrorCode::InvalidChainConfig, "chains are too short");
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    if (chains[c].size() != n) throw Error(ErrorCode::InvalidChainConfig, "chains differ in length");
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : chains[c]) ss += (x - means[c]) * (x - means[c]);
    vars[c] = ss / static_cast<double>(n - 1);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= static_cast<double>(n) / static_cast<double>(m - 1);
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * W + B / static_cast<double>(n);
  return std::sqrt(var_plus / W);
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "sweep,alpha";
  const auto k = trace.empty() ? 0 : trace.front().tau2.size();
  for (Eigen::Index m = 0; m < k; ++m) out << ",tau2_" << (m + 1);
  out << ",active\n";
  for (const auto& row : trace) {
    out << row.sweep << ',' << format_double(row.alpha);
    for (Eigen::Index m = 0; m < row.tau2.size(); ++m) out << ',' << format_double(row.tau2(m));
    out << ',' << row.active << '\n';
  }
}

}  // namespace cmmmix
