#include "oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "cmmmix/data.hpp"
#include "cmmmix/gower.hpp"

namespace cmmmix::oracle {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t u(int i) { return static_cast<std::size_t>(i); }

double log_det(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double log_multigamma(double a, int p) {
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 0; j < p; ++j) out += std::lgamma(a - 0.5 * j);
  return out;
}

Eigen::VectorXd design_row(const Model& model, const ModelState& s, int i) {
  std::vector<double> row(s.completed.row(i).data(), s.completed.row(i).data() + s.completed.cols());
  return model.design().evaluate(row);
}

}  // namespace

double log_normal(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

double log_mvnormal(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd e = x - mean;
  const double quad = e.dot(cov.inverse() * e);
  return -0.5 * (x.size() * std::log(2.0 * std::numbers::pi) + log_det(cov) + quad);
}

double log_gamma_density(double x, double shape, double rate) {
  if (!(x > 0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_beta_density(double x, double a, double b) {
  if (!(x > 0 && x < 1)) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

double log_dirichlet(const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
  double out = std::lgamma(a.sum());
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (!(x(j) > 0)) return kNegInf;
    out += (a(j) - 1.0) * std::log(x(j)) - std::lgamma(a(j));
  }
  return out;
}

double log_wishart(const Eigen::MatrixXd& x, double df, const Eigen::MatrixXd& scale) {
  const int p = static_cast<int>(x.rows());
  return 0.5 * (df - p - 1.0) * log_det(x) - 0.5 * (scale.inverse() * x).trace() -
         0.5 * df * p * std::log(2.0) - 0.5 * df * log_det(scale) - log_multigamma(0.5 * df, p);
}

double log_inverse_wishart(const Eigen::MatrixXd& x, double df, const Eigen::MatrixXd& scale) {
  const int p = static_cast<int>(x.rows());
  return 0.5 * df * log_det(scale) - 0.5 * df * p * std::log(2.0) - log_multigamma(0.5 * df, p) -
         0.5 * (df + p + 1.0) * log_det(x) - 0.5 * (scale * x.inverse()).trace();
}

std::vector<std::vector<int>> neighborhoods(const Model& model, const Eigen::MatrixXd& locations) {
  const auto& spec = model.hyper().distance;
  std::vector<std::vector<int>> out(u(model.n()));
  for (int i = 0; i < model.n(); ++i)
    for (int h = 0; h < static_cast<int>(locations.rows()); ++h) {
      double d = 0.0;
      for (int l = 0; l < model.q(); ++l) {
        const auto& v = spec.variables[u(l)];
        const double a = model.fixed()(i, l), b = locations(h, l);
        d += spec.weights[u(l)] * (v.kind == Kind::Nominal ? (a == b ? 0.0 : 1.0)
                                                            : std::abs(a - b) / (v.upper - v.lower));
      }
      if (d <= spec.dstar) out[u(i)].push_back(h);
    }
  return out;
}

double log_joint(const Model& model, const ModelState& s) {
  const auto& hp = model.hyper();
  const auto& data = model.data();
  const int N = model.N(), P = model.P(), k = model.k();
  double lj = log_gamma_density(s.alpha, hp.a_alpha, hp.b_alpha);
  // beta(1, alpha) written with the stored log(1 - V).
  for (int h = 0; h < N; ++h) lj += std::log(s.alpha) + (s.alpha - 1.0) * s.log1m_sticks(h);
  for (int h = 0; h < N; ++h)
    for (int l = 0; l < model.q(); ++l) {
      const auto& v = hp.distance.variables[u(l)];
      const double g = s.locations(h, l);
      if (v.kind == Kind::Continuous) {
        if (g < v.lower || g > v.upper) return kNegInf;
      } else if (g != std::round(g) || g < 1 || g > v.levels) {
        return kNegInf;
      }
    }
  for (int m = 0; m < k; ++m) {
    const double t = s.tau2(m);
    if (!(t > 0) || t > hp.tau2_max) return kNegInf;
    lj += hp.a_tau * std::log(hp.b_tau) - std::lgamma(hp.a_tau) - (hp.a_tau + 1.0) * std::log(t) - hp.b_tau / t;
    for (int r = 0; r < P; ++r) {
      lj += log_normal(s.beta0(m, r), 0.0, hp.h);
      for (int h = 0; h < N; ++h) lj += log_normal(s.beta[u(h)](m, r), s.beta0(m, r), t);
    }
  }
  lj += log_wishart(s.scale, hp.a_s, hp.b_s);
  for (int h = 0; h < N; ++h) {
    lj += log_inverse_wishart(s.sigma[u(h)], hp.nu, s.scale);
    for (int j = 0; j < model.p_n(); ++j) {
      const auto& a = hp.dirichlet[u(j)];
      lj += log_dirichlet(s.psi[u(h)][u(j)], Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())));
    }
  }

  const auto eta = neighborhoods(model, s.locations);
  for (int i = 0; i < model.n(); ++i) {
    const int H = s.alloc[u(i)];
    const auto& e = eta[u(i)];
    double log_w = kNegInf, log_rest = 0.0;
    for (std::size_t pos = 0; pos < e.size(); ++pos) {
      const bool last = pos + 1 == e.size();
      if (e[pos] == H) {
        log_w = last ? log_rest : log_rest + std::log(s.sticks(H));
        break;
      }
      log_rest += s.log1m_sticks(e[pos]);
    }
    if (log_w == kNegInf) return kNegInf;
    lj += log_w;

    for (int j = 0; j < model.p_n(); ++j) {
      const int col = model.nominal_column(j);
      const double x = s.completed(i, col);
      if (!data.missing(u(i), u(col)) && x != data.value(u(i), u(col))) return kNegInf;
      lj += std::log(s.psi[u(H)][u(j)](static_cast<int>(x) - 1));
    }
    const Eigen::VectorXd mean = (design_row(model, s, i).transpose() * s.beta[u(H)]).transpose();
    lj += log_mvnormal(s.latent.row(i).transpose(), mean, s.sigma[u(H)]);
    for (int r = 0; r < P; ++r) {
      const int col = model.latent_column(r);
      if (data.missing(u(i), u(col))) continue;
      const double w = s.latent(i, r), y = data.value(u(i), u(col));
      if (r < model.p_o()) {
        const auto& c = hp.cutoffs[u(r)];
        const int level = static_cast<int>(y);
        const double lo = level == 1 ? -INFINITY : c[u(level - 2)];
        const double hi = level == static_cast<int>(c.size()) + 1 ? INFINITY : c[u(level - 1)];
        if (!(w > lo && w <= hi)) return kNegInf;
      } else if (w != y) {
        return kNegInf;
      }
    }
  }
  return lj;
}

Model tiny_model(double dstar) {
  Schema schema = {
      {"y", Role::Random, Kind::Ordinal, 3},    {"z", Role::Random, Kind::Continuous, 0},
      {"x", Role::Random, Kind::Nominal, 3},    {"f1", Role::Fixed, Kind::Continuous, 0},
      {"f2", Role::Fixed, Kind::Nominal, 2},
  };
  const double na = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd v(4, 5);
  v << 1, 0.5, 1, 0.0, 1,
       na, -1.0, 2, 1.0, 2,
       3, na, 3, 2.0, 1,
       2, 1.2, na, 3.0, 2;
  MixedDataset data(schema, v, false);
  DesignConfig cfg{{DesignTerm::intercept(), DesignTerm::dummy("x", 2), DesignTerm::dummy("x", 3),
                    DesignTerm::linear("f1")}};
  Design design(schema, cfg);
  auto hp = default_hyperpriors(data, 3, equal_weight_spec(data, dstar));
  return Model(std::move(data), std::move(design), std::move(hp));
}

ModelState draw_prior_state(const Model& model, Rng& rng) {
  const auto& hp = model.hyper();
  const int N = model.N(), P = model.P(), k = model.k(), n = model.n();
  ModelState s;
  s.alpha = draw_gamma(rng, hp.a_alpha, hp.b_alpha);
  s.sticks.resize(N);
  s.log1m_sticks.resize(N);
  for (int h = 0; h < N; ++h) {
    const auto [lv, l1m] = draw_log_beta(rng, 1.0, s.alpha);
    s.sticks(h) = std::exp(lv);
    s.log1m_sticks(h) = l1m;
  }
  s.locations.resize(N, model.q());
  std::vector<std::vector<int>> eta;
  for (;;) {
    for (int h = 0; h < N; ++h) draw_location_prior(model, rng, s.locations.row(h));
    eta = neighborhoods(model, s.locations);
    bool ok = true;
    for (const auto& e : eta) ok = ok && !e.empty();
    if (ok) break;
  }
  s.beta0.resize(k, P);
  s.tau2.resize(k);
  for (int m = 0; m < k; ++m) {
    const double floor = std::isinf(hp.tau2_max) ? 0.0 : 1.0 / hp.tau2_max;
    s.tau2(m) = 1.0 / draw_gamma_lower_truncated(rng, hp.a_tau, hp.b_tau, floor);
    for (int r = 0; r < P; ++r) s.beta0(m, r) = draw_normal(rng, 0.0, std::sqrt(hp.h));
  }
  s.beta.assign(u(N), Eigen::MatrixXd(k, P));
  for (int h = 0; h < N; ++h)
    for (int m = 0; m < k; ++m)
      for (int r = 0; r < P; ++r)
        s.beta[u(h)](m, r) = draw_normal(rng, s.beta0(m, r), std::sqrt(s.tau2(m)));
  s.scale = draw_wishart(rng, hp.a_s, hp.b_s);
  for (int h = 0; h < N; ++h) {
    s.sigma.push_back(draw_inverse_wishart(rng, hp.nu, s.scale));
    s.psi.emplace_back();
    for (const auto& a : hp.dirichlet) s.psi.back().push_back(draw_dirichlet(rng, a));
  }
  s.alloc.resize(u(n));
  for (int i = 0; i < n; ++i) {
    const auto& e = eta[u(i)];
    std::vector<double> lw;
    double log_rest = 0.0;
    for (std::size_t pos = 0; pos < e.size(); ++pos) {
      if (pos + 1 == e.size()) {
        lw.push_back(log_rest);
      } else {
        lw.push_back(log_rest + std::log(s.sticks(e[pos])));
        log_rest += s.log1m_sticks(e[pos]);
      }
    }
    s.alloc[u(i)] = e[draw_categorical_log(rng, lw)];
  }
  s.completed = model.data().values();
  s.latent.resize(n, P);
  resimulate_data(model, s, rng);
  return s;
}

Model resimulate_data(const Model& model, ModelState& s, Rng& rng) {
  const auto& data = model.data();
  const int n = model.n(), P = model.P();
  if (s.completed.rows() != n) s.completed = data.values();
  if (s.latent.rows() != n) s.latent.resize(n, P);
  for (int i = 0; i < n; ++i) {
    const int H = s.alloc[u(i)];
    for (int j = 0; j < model.p_n(); ++j) {
      const auto& psi = s.psi[u(H)][u(j)];
      std::vector<double> lw(psi.data(), psi.data() + psi.size());
      for (double& x : lw) x = std::log(x);
      s.completed(i, model.nominal_column(j)) = 1.0 + static_cast<double>(draw_categorical_log(rng, lw));
    }
    const Eigen::VectorXd mean = (design_row(model, s, i).transpose() * s.beta[u(H)]).transpose();
    const Eigen::MatrixXd L = s.sigma[u(H)].llt().matrixL();
    const Eigen::VectorXd w = draw_mvnormal_chol(rng, mean, L);
    s.latent.row(i) = w.transpose();
    for (int r = 0; r < P; ++r)
      s.completed(i, model.latent_column(r)) = r < model.p_o() ? model.level_of(r, w(r)) : w(r);
  }
  Eigen::MatrixXd values = data.values();
  for (std::size_t c = 0; c < data.cols(); ++c) {
    if (data.schema()[c].role == Role::Fixed) continue;
    for (int i = 0; i < n; ++i)
      if (!data.missing(u(i), c)) values(i, static_cast<Eigen::Index>(c)) = s.completed(i, static_cast<Eigen::Index>(c));
  }
  Model out(MixedDataset(data.schema(), values, false), model.design(), model.hyper());
  refresh_caches(out, s);
  return out;
}

}  // namespace cmmmix::oracle
