#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "cmmmix/error.hpp"
#include "cmmmix/sampler.hpp"
#include "conditional_checks.hpp"
#include "oracle.hpp"

using namespace cmmmix;

namespace {

std::size_t u(int i) { return static_cast<std::size_t>(i); }

ModelState warmed_state(const Model& model, std::uint64_t seed, int sweeps) {
  auto s = init_state(model, seed);
  for (int t = 0; t < sweeps; ++t) gibbs_sweep(model, s, seed);
  return s;
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& x) {
  Moments m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= double(x.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("every full conditional is proportional to the joint") {
  for (double dstar : {0.6, 0.35, 1.0}) {
    const Model model = oracle::tiny_model(dstar);
    for (int sweeps : {0, 7, 25}) {
      const auto s = warmed_state(model, 100 + sweeps, sweeps);
      REQUIRE(validate(s, model).empty());
      for (const auto& r : oracle::conditional_checks(model, s, 9)) {
        INFO(r.update << " dstar=" << dstar << " sweeps=" << sweeps);
        CHECK(r.max_rel_dev < 1e-6);
      }
    }
  }
}

TEST_CASE("normalized deviation helper") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(oracle::max_normalized_deviation({0.0, 1.0}, {5.0, 6.0}) < 1e-15);
  CHECK(oracle::max_normalized_deviation({0.0, -inf}, {0.0, 1.0}) == inf);
  CHECK(oracle::max_normalized_deviation({0.0, std::log(2.0)}, {0.0, 0.0}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("empty component draws atoms from the base distribution") {
  const Model model = oracle::tiny_model();
  auto s = init_state(model, 4);
  s.tau2 << 0.5, 1.0, 2.0, 3.0;
  s.beta0.setRandom();
  const auto law = beta_column_conditional(model, s, 0, 1, {});
  CHECK(law.mean == s.beta0.col(1));
  CHECK(law.cov.diagonal() == s.tau2);
  CHECK(law.cov.isDiagonal());

  const auto sig = sigma_conditional(model, s, 0, {});
  CHECK(sig.df == model.hyper().nu);
  CHECK(sig.scale == s.scale);

  const auto psi = psi_conditional(model, s, 0, 0, {});
  CHECK(psi.concentration == Eigen::Vector3d(1, 1, 1));
}

TEST_CASE("beta column: conjugate normal-mean limit") {
  // One observation w = 2 with intercept-only design, unit variance and a
  // nearly flat prior: posterior mean -> 2, variance -> 1.
  Schema schema = {{"z", Role::Random, Kind::Continuous, 0}};
  Eigen::MatrixXd v(1, 1);
  v << 2.0;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  auto hp = default_hyperpriors(data, 2);
  hp.tau2_max = 1e9;
  const Model model(data, design, hp);
  auto s = init_state(model, 1);
  s.tau2(0) = 1e8;
  s.beta0(0, 0) = 0.0;
  s.sigma[0](0, 0) = 1.0;
  s.alloc[0] = 0;
  const auto law = beta_column_conditional(model, s, 0, 0, {0});
  CHECK(law.mean(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(law.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("beta column draws match the closed-form posterior") {
  const Model model = oracle::tiny_model(1.0);
  auto s = warmed_state(model, 21, 5);
  const std::vector<int> members = {0, 1, 2};
  for (int i : members) s.alloc[u(i)] = 0;
  const auto law = beta_column_conditional(model, s, 0, 0, members);
  const int k = model.k();
  const int draws = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(k, k);
  for (int t = 0; t < draws; ++t) {
    ModelState c = s;
    c.sweep = t;
    update_beta(model, c, 0, members, 77);
    const Eigen::VectorXd x = c.beta[0].col(0);
    sum += x;
    sq += (x - law.mean) * (x - law.mean).transpose();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::MatrixXd cov = sq / draws;
  for (int m = 0; m < k; ++m) {
    const double se = std::sqrt(law.cov(m, m) / draws);
    CHECK(std::abs(mean(m) - law.mean(m)) < 3.5 * se);
    CHECK(cov(m, m) == doctest::Approx(law.cov(m, m)).epsilon(0.03));
  }
}

TEST_CASE("scalar covariance update reduces to inverse-gamma") {
  Schema schema = {{"z", Role::Random, Kind::Continuous, 0}};
  Eigen::MatrixXd v(3, 1);
  v << 1.0, -0.5, 2.0;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 1));
  auto s = init_state(model, 2);
  s.beta[0](0, 0) = 0.25;
  s.scale(0, 0) = 0.7;
  const std::vector<int> members = {0, 1, 2};
  double rss = 0.0;
  for (int i = 0; i < 3; ++i) rss += std::pow(s.latent(i, 0) - 0.25, 2);
  const auto law = sigma_conditional(model, s, 0, members);
  CHECK(law.df == doctest::Approx(model.hyper().nu + 3));
  CHECK(law.scale(0, 0) == doctest::Approx(0.7 + rss));
  // IG(df/2, scale/2): the draw of 1/sigma is gamma(df/2, rate scale/2).
  std::vector<double> prec;
  for (int t = 0; t < 50000; ++t) {
    ModelState c = s;
    c.sweep = t;
    update_sigma(model, c, 0, members, 5);
    prec.push_back(1.0 / c.sigma[0](0, 0));
  }
  const auto m = moments(prec);
  const double shape = law.df / 2, rate = law.scale(0, 0) / 2;
  CHECK(std::abs(m.mean - shape / rate) < 3.5 * std::sqrt(shape / (rate * rate) / prec.size()));
  CHECK(m.var == doctest::Approx(shape / (rate * rate)).epsilon(0.04));
}

TEST_CASE("psi update: counts (3, 2) give Dirichlet(4, 3)") {
  Schema schema = {{"z", Role::Random, Kind::Continuous, 0}, {"x", Role::Random, Kind::Nominal, 2}};
  Eigen::MatrixXd v(5, 2);
  v << 0.1, 1, 0.2, 1, 0.3, 1, 0.4, 2, 0.5, 2;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 2));
  auto s = init_state(model, 2);
  const std::vector<int> members = {0, 1, 2, 3, 4};
  const auto law = psi_conditional(model, s, 1, 0, members);
  CHECK(law.concentration == Eigen::Vector2d(4, 3));
  double sum = 0.0;
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) {
    s.sweep = t;
    update_psi(model, s, 1, members, 8);
    sum += s.psi[1][0](0);
  }
  const double se = std::sqrt((4.0 / 7) * (3.0 / 7) / 8.0 / draws);
  CHECK(std::abs(sum / draws - 4.0 / 7) < 3 * se);
}

TEST_CASE("alpha update: gamma(20.5, 10.5)") {
  Schema schema = {{"z", Role::Random, Kind::Continuous, 0}};
  Eigen::MatrixXd v(2, 1);
  v << 0.0, 1.0;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 20));
  auto s = init_state(model, 2);
  s.sticks.setConstant(-std::expm1(-0.5));
  s.log1m_sticks.setConstant(-0.5);
  const auto law = alpha_conditional(model, s);
  CHECK(law.shape == doctest::Approx(20.5));
  CHECK(law.rate == doctest::Approx(10.5));
  std::vector<double> x;
  for (int t = 0; t < 100000; ++t) {
    s.sweep = t;
    update_alpha(model, s, 3);
    x.push_back(s.alpha);
  }
  const auto m = moments(x);
  CHECK(std::abs(m.mean - 20.5 / 10.5) < 3 * std::sqrt(20.5 / (10.5 * 10.5) / x.size()));

  s.sticks.setConstant(1e-300);
  s.log1m_sticks.setConstant(-1e-300);
  CHECK(alpha_conditional(model, s).rate == doctest::Approx(0.5));
}

TEST_CASE("beta0 update: scalar conjugate oracle") {
  const Model model = oracle::tiny_model();
  auto s = init_state(model, 6);
  s.tau2(1) = 2.0;
  s.beta[0](1, 0) = 1.0;
  s.beta[1](1, 0) = -0.4;
  s.beta[2](1, 0) = 0.7;
  const auto law = beta0_conditional(model, s, 1, 0);
  const double var = 1.0 / (1.0 / 0.75 + 3.0 / 2.0);
  CHECK(law.cov(0, 0) == doctest::Approx(var));
  CHECK(law.mean(0) == doctest::Approx(var * 1.3 / 2.0));
  s.tau2(1) = 1e12;
  CHECK(beta0_conditional(model, s, 1, 0).cov(0, 0) == doctest::Approx(0.75));
}

TEST_CASE("tau2 draws follow the truncated inverse-gamma") {
  const Model model = oracle::tiny_model();
  auto s = init_state(model, 6);
  for (auto& b : s.beta) b.row(0) = s.beta0.row(0).array() + 2.5;  // large spread
  const auto law = tau2_precision_conditional(model, s, 0);
  CHECK(law.shape == doctest::Approx(3.0 + 0.5 * 3 * 2));
  CHECK(law.minimum == doctest::Approx(1.0 / 6.0));
  // Kolmogorov-Smirnov against the renormalized CDF of tau2.
  boost::math::gamma_distribution<double> g(law.shape, 1.0 / law.rate);
  const double tail = boost::math::cdf(boost::math::complement(g, law.minimum));
  std::vector<double> x;
  for (int t = 0; t < 100000; ++t) {
    s.sweep = t;
    update_tau2(model, s, 12);
    x.push_back(s.tau2(0));
  }
  std::sort(x.begin(), x.end());
  CHECK(x.back() <= 6.0);
  double d = 0.0;
  const double nn = double(x.size());
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double F = boost::math::cdf(boost::math::complement(g, 1.0 / x[a])) / tail;
    d = std::max({d, std::abs(F - a / nn), std::abs(F - (a + 1) / nn)});
  }
  // p > 0.01 corresponds to sqrt(n) D < 1.628.
  CHECK(std::sqrt(nn) * d < 1.628);
}

TEST_CASE("scale update reduces to a scalar gamma") {
  Schema schema = {{"z", Role::Random, Kind::Continuous, 0}};
  Eigen::MatrixXd v(2, 1);
  v << 0.0, 1.0;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 2));
  auto s = init_state(model, 2);
  s.sigma[0](0, 0) = 0.5;
  s.sigma[1](0, 0) = 2.0;
  const auto& hp = model.hyper();
  const auto law = scale_conditional(model, s);
  CHECK(law.df == doctest::Approx(2 * hp.nu + hp.a_s));
  CHECK(law.scale(0, 0) == doctest::Approx(1.0 / (1.0 / hp.b_s(0, 0) + 2.0 + 0.5)));
  // scalar Wishart(df, s) = gamma(df / 2, scale 2 s)
  std::vector<double> x;
  for (int t = 0; t < 50000; ++t) {
    s.sweep = t;
    update_scale(model, s, 4);
    x.push_back(s.scale(0, 0));
  }
  const auto m = moments(x);
  const double mean = law.df * law.scale(0, 0);
  const double var = 2 * law.df * law.scale(0, 0) * law.scale(0, 0);
  CHECK(std::abs(m.mean - mean) < 3.5 * std::sqrt(var / x.size()));
}

TEST_CASE("allocation: singleton neighborhood and identical atoms") {
  const Model model = oracle::tiny_model();
  auto s = init_state(model, 8);
  auto cache = build_component_cache(model, s);
  s.eta[0] = {2};
  const auto forced = allocation_conditional(model, s, cache, 0);
  CHECK(forced.support == std::vector<int>{2});

  for (int h = 1; h < model.N(); ++h) {
    s.beta[u(h)] = s.beta[0];
    s.sigma[u(h)] = s.sigma[0];
    s.psi[u(h)] = s.psi[0];
  }
  cache = build_component_cache(model, s);
  s.eta[1] = {0, 1, 2};
  const auto law = allocation_conditional(model, s, cache, 1);
  const auto w = local_weights(s.eta[1], s.sticks);
  const double z = std::log(std::accumulate(law.log_weights.begin(), law.log_weights.end(), 0.0,
                                            [](double a, double b) { return a + std::exp(b); }));
  for (std::size_t t = 0; t < 3; ++t) CHECK(std::exp(law.log_weights[t] - z) == doctest::Approx(w[t]));
}

TEST_CASE("stick counts on a hand instance") {
  const Model model = oracle::tiny_model();
  auto s = init_state(model, 8);
  s.alpha = 0.8;
  s.eta = {{0, 1, 2}, {0, 2}, {1, 2}, {0}};
  s.alloc = {1, 2, 2, 0};
  const auto laws = stick_conditionals(model, s);
  // row 0: H=1 not last -> a_1; H > 0 with 0 in eta -> b_0
  // row 1: H=2 last -> nothing for a; b_0
  // row 2: H=2 last; b_1
  // row 3: H=0 last (singleton) -> nothing
  CHECK(laws[0].a == 1.0);
  CHECK(laws[0].b == doctest::Approx(0.8 + 2));
  CHECK(laws[1].a == 2.0);
  CHECK(laws[1].b == doctest::Approx(0.8 + 1));
  CHECK(laws[2].a == 1.0);
  CHECK(laws[2].b == doctest::Approx(0.8));
}

TEST_CASE("location draws keep every member within d*") {
  const Model model = oracle::tiny_model(0.45);
  auto s = warmed_state(model, 31, 10);
  const auto& spec = model.hyper().distance;
  for (auto mode : {LocationUpdate::Exact, LocationUpdate::MembersOnly}) {
    for (int t = 0; t < 2000; ++t) {
      s.sweep = 1000 + t;
      const auto members = component_members(s, model.N());
      for (int h = 0; h < model.N(); ++h) {
        update_location(model, s, h, members[u(h)], 3, mode);
        for (int i : members[u(h)]) {
          std::vector<double> f = {model.fixed()(i, 0), model.fixed()(i, 1)};
          std::vector<double> g = {s.locations(h, 0), s.locations(h, 1)};
          CHECK(gower_distance(f, g, spec) <= spec.dstar);
        }
      }
      for (int i = 0; i < model.n(); ++i)
        CHECK(std::binary_search(s.eta[u(i)].begin(), s.eta[u(i)].end(), s.alloc[u(i)]));
    }
  }
}

TEST_CASE("members-only location law is uniform on the feasible set") {
  const Model model = oracle::tiny_model(0.45);
  auto s = warmed_state(model, 31, 10);
  const auto members = component_members(s, model.N());
  for (int h = 0; h < model.N(); ++h) {
    const auto law = location_conditional(model, s, h, 0, members[u(h)], LocationUpdate::MembersOnly);
    for (double w : law.log_weights) CHECK(w == 0.0);
    if (members[u(h)].empty()) {
      CHECK(law.values.front() == model.location_support(0).lower);
      CHECK(law.values.back() == model.location_support(0).upper);
    }
  }
}

TEST_CASE("latent conditional on a single ordinal variable") {
  Schema schema = {{"y", Role::Random, Kind::Ordinal, 3}};
  Eigen::MatrixXd v(2, 1);
  v << 2, std::numeric_limits<double>::quiet_NaN();
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 1));
  auto s = init_state(model, 2);
  s.beta[0](0, 0) = 0.0;
  s.sigma[0](0, 0) = 1.0;
  const auto cache = build_component_cache(model, s);
  const auto law = latent_conditional(model, s, cache, 0, 0);
  CHECK(law.mean == 0.0);
  CHECK(law.sd == 1.0);
  CHECK(law.lower == doctest::Approx(-3.0));
  CHECK(law.upper == doctest::Approx(3.0));
  const auto free = latent_conditional(model, s, cache, 1, 0);
  CHECK(std::isinf(free.lower));
  CHECK(std::isinf(free.upper));
}

TEST_CASE("sequential bivariate latent draws match rejection sampling") {
  // W ~ N(0, [[1, .6], [.6, 1]]) restricted to W_1 in (-3, 0], W_2 in (0, 3].
  Schema schema = {{"y1", Role::Random, Kind::Ordinal, 4}, {"y2", Role::Random, Kind::Ordinal, 4}};
  Eigen::MatrixXd v(1, 2);
  v << 2, 3;
  MixedDataset data(schema, v, false);
  Design design(schema, DesignConfig{{DesignTerm::intercept()}});
  const Model model(data, design, default_hyperpriors(data, 1));
  auto s = init_state(model, 2);
  s.beta[0].setZero();
  s.sigma[0] << 1.0, 0.6, 0.6, 1.0;
  const auto cache = build_component_cache(model, s);
  std::vector<double> gibbs1, gibbs2;
  for (int t = 0; t < 60000; ++t) {
    s.sweep = t;
    update_latents(model, s, cache, 0, 13);
    if (t >= 1000) {
      gibbs1.push_back(s.latent(0, 0));
      gibbs2.push_back(s.latent(0, 1));
    }
  }
  Rng rng(99);
  const Eigen::Matrix2d L = s.sigma[0].llt().matrixL();
  std::vector<double> rej1, rej2;
  while (rej1.size() < 60000) {
    const Eigen::Vector2d w = L * Eigen::Vector2d(draw_normal(rng), draw_normal(rng));
    if (w(0) > -3 && w(0) <= 0 && w(1) > 0 && w(1) <= 3) {
      rej1.push_back(w(0));
      rej2.push_back(w(1));
    }
  }
  // Gibbs draws are autocorrelated; allow for an effective size of about a third.
  const auto g1 = moments(gibbs1), g2 = moments(gibbs2), r1 = moments(rej1), r2 = moments(rej2);
  CHECK(std::abs(g1.mean - r1.mean) < 3 * std::sqrt(r1.var * (3.0 / gibbs1.size() + 1.0 / rej1.size())));
  CHECK(std::abs(g2.mean - r2.mean) < 3 * std::sqrt(r2.var * (3.0 / gibbs2.size() + 1.0 / rej2.size())));
  CHECK(g1.var == doctest::Approx(r1.var).epsilon(0.05));
}

TEST_CASE("nominal imputation: hand normalization") {
  const Model model = oracle::tiny_model();
  auto s = warmed_state(model, 40, 3);
  const auto cache = build_component_cache(model, s);
  const int i = 3, h = s.alloc[3];
  const auto law = nominal_conditional(model, s, cache, i, 0);
  REQUIRE(law.support == std::vector<int>{1, 2, 3});
  for (int l = 1; l <= 3; ++l) {
    Eigen::VectorXd d(4);
    d << 1.0, l == 2, l == 3, model.fixed()(i, 0);
    const Eigen::VectorXd mean = (d.transpose() * s.beta[u(h)]).transpose();
    const double want = std::log(s.psi[u(h)][0](l - 1)) +
                        oracle::log_mvnormal(s.latent.row(i).transpose(), mean, s.sigma[u(h)]);
    CHECK(law.log_weights[u(l - 1)] == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("sweeps preserve every state invariant") {
  const Model model = oracle::tiny_model(0.45);
  auto s = init_state(model, 17);
  for (int t = 0; t < 500; ++t) {
    gibbs_sweep(model, s, 17, {LocationUpdate::Exact, t % 2 == 1});
    const auto v = validate(s, model);
    if (!v.empty()) {
      FAIL("sweep " << t << ": " << to_string(v.front().kind) << " " << v.front().detail);
    }
  }
}

TEST_CASE("fixed seed gives an identical trajectory") {
  const Model model = oracle::tiny_model(0.5);
  auto a = init_state(model, 5), b = init_state(model, 5);
  for (int t = 0; t < 50; ++t) {
    gibbs_sweep(model, a, 5);
    gibbs_sweep(model, b, 5);
  }
  std::stringstream sa, sb;
  write_state(sa, a);
  write_state(sb, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("full neighborhoods reproduce the global truncated DP path") {
  for (double dstar : {1.0}) {
    const Model model = oracle::tiny_model(dstar);
    auto a = init_state(model, 12), b = init_state(model, 12);
    for (int t = 0; t < 200; ++t) {
      gibbs_sweep(model, a, 12);
      reference_dp_sweep(model, b, 12);
    }
    std::stringstream sa, sb;
    write_state(sa, a);
    write_state(sb, b);
    CHECK(sa.str() == sb.str());
  }
}

TEST_CASE("chain bookkeeping") {
  const Model model = oracle::tiny_model();
  ChainConfig cfg;
  cfg.iterations = 100;
  cfg.burn_in = 50;
  cfg.thin = 5;
  cfg.completions = 10;
  cfg.seed = 3;
  const auto draws = run_chain(model, cfg);
  CHECK(draws.snapshots.size() == 10);
  CHECK(draws.snapshot_sweeps.front() == 55);
  CHECK(draws.trace.size() == 100);
  REQUIRE(draws.completed.size() == 10);
  CHECK(draws.completion_sweeps.back() == 100);
  for (const auto& c : draws.completed) CHECK_FALSE(c.array().isNaN().any());
  CHECK(draws.snapshots.front().latent.size() == 0);

  CHECK(completion_schedule(cfg) == std::vector<std::int64_t>{55, 60, 65, 70, 75, 80, 85, 90, 95, 100});
  cfg.completions = 3;
  CHECK(completion_schedule(cfg) == std::vector<std::int64_t>{67, 84, 100});

  cfg.burn_in = 100;
  CHECK_THROWS_AS(run_chain(model, cfg), Error);
  cfg.burn_in = 10;
  cfg.thin = 0;
  CHECK_THROWS_AS(validate_chain_config(cfg), Error);
}

TEST_CASE("chains are independent of the thread count") {
  const Model model = oracle::tiny_model();
  ChainConfig cfg;
  cfg.iterations = 40;
  cfg.burn_in = 20;
  cfg.completions = 2;
  const auto one = run_chains(model, cfg, 3, 1);
  const auto three = run_chains(model, cfg, 3, 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(one[u(c)].trace.back().alpha == three[u(c)].trace.back().alpha);
    CHECK(one[u(c)].completed.back() == three[u(c)].completed.back());
  }
  CHECK(one[0].trace.back().alpha != one[1].trace.back().alpha);
}

TEST_CASE("gelman-rubin statistic") {
  CHECK(gelman_rubin({{1, 2, 3, 4}, {1, 2, 3, 4}}) == doctest::Approx(std::sqrt(0.75)));
  CHECK(gelman_rubin({{0, 0.1, 0, 0.1}, {5, 5.1, 5, 5.1}}) > 10.0);
  CHECK_THROWS_AS(gelman_rubin({{1, 2}}), Error);
}

TEST_CASE("trace csv") {
  TraceRow r;
  r.sweep = 1;
  r.alpha = 0.5;
  r.tau2 = Eigen::Vector2d(1.0, 2.0);
  r.active = 3;
  std::ostringstream out;
  write_trace_csv(out, {r});
  CHECK(out.str() == "sweep,alpha,tau2_1,tau2_2,active\n1,0.5,1,2,3\n");
}
