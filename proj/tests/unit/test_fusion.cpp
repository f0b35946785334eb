#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "cmmmix/error.hpp"
#include "cmmmix/fusion.hpp"
#include "cmmmix/infosel.hpp"
#include "cmmmix/random.hpp"

using namespace cmmmix;

namespace {

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

double phi_cdf(double z) { return boost::math::cdf(boost::math::normal(), z); }

MixedDataset shared_data(const GenConfig& g, int n, std::uint64_t seed) {
  return MixedDataset(shared_schema(g), draw_shared(g, n, seed), false);
}

/// Two nominal match keys, one target.
Schema matching_schema() {
  return {{"a", Role::Fixed, Kind::Nominal, 3}, {"b", Role::Fixed, Kind::Nominal, 3},
          {"t", Role::Random, Kind::Continuous, 0}};
}

}  // namespace

TEST_CASE("default generator shape and tracked cells") {
  const GenConfig g = default_generator();
  validate_generator(g);
  std::vector<int> levels;
  for (const auto& v : g.shared) levels.push_back(v.levels());
  CHECK(levels == std::vector<int>{6, 5, 5, 7, 5, 5, 4, 2, 2, 2, 2});
  const int total = std::accumulate(levels.begin(), levels.end(), 0);
  CHECK(tracked_cells(g).size() == static_cast<std::size_t>(total * (g.x.levels() + g.y.levels())));
  CHECK(fusion_schema(g).size() == g.shared.size() + 3);
}

TEST_CASE("copula marginals match the level probabilities") {
  const GenConfig g = default_generator();
  const int n = 100000;
  const Eigen::MatrixXd a = draw_shared(g, n, 3);
  for (std::size_t j = 0; j < g.shared.size(); ++j)
    for (int l = 1; l <= g.shared[j].levels(); ++l) {
      const double p = g.shared[j].probs[static_cast<std::size_t>(l - 1)];
      const double freq = (a.col(static_cast<Eigen::Index>(j)).array() == l).cast<double>().mean();
      CHECK(std::abs(freq - p) < 4.0 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("zero coefficients give a standard normal Z independent of A") {
  GenConfig g = default_generator();
  g.z.coef.setZero();
  const auto rep = generate_fusion_replicate(shared_data(g, 50000, 5), g);
  const Eigen::Index zc = static_cast<Eigen::Index>(g.shared.size());
  const Eigen::VectorXd z = rep.values.col(zc);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().sum() / static_cast<double>(z.size() - 1);
  CHECK(std::abs(mean) < 4.0 / std::sqrt(50000.0));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / 50000.0));
  const Eigen::VectorXd o3 = rep.values.col(2);
  const double corr = ((o3.array() - o3.mean()) * (z.array() - mean)).mean() /
                      std::sqrt((o3.array() - o3.mean()).square().mean() * (z.array() - mean).square().mean());
  CHECK(std::abs(corr) < 4.0 / std::sqrt(50000.0));
}

TEST_CASE("intercept-only probit reproduces the cutoff gaps") {
  GenConfig g = default_generator();
  g.y.terms.terms = {DesignTerm::intercept()};
  g.y.coef = Eigen::VectorXd::Constant(1, 0.3);
  g.y.cutoffs = {-0.5, 0.4, 1.2};
  const int n = 60000;
  const auto rep = generate_fusion_replicate(shared_data(g, n, 6), g);
  const Eigen::Index yc = static_cast<Eigen::Index>(g.shared.size()) + 1;
  const double edges[] = {-1e300, -0.5, 0.4, 1.2, 1e300};
  for (int l = 1; l <= 4; ++l) {
    const double p = phi_cdf(edges[l] - 0.3) - phi_cdf(edges[l - 1] - 0.3);
    const double freq = (rep.values.col(yc).array() == l).cast<double>().mean();
    CHECK(std::abs(freq - p) < 4.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("conditional probabilities against hand formulas") {
  const GenConfig g = default_generator();
  // o1..o6, n1..n5
  const std::vector<double> a = {2, 3, 4, 1, 5, 2, 2, 1, 2, 1, 1};
  const double zm = -1.7 + 0.5 * 4 + 0.5 * 1 + 0.15 * 2 + 0.2 * 4;
  CHECK(z_mean(g, a) == doctest::Approx(zm).epsilon(1e-14));
  const double mu = -1.6 + 0.4 * 4 + 0.7 + 0.1 * 3;
  const auto py = y_probabilities(g, a);
  CHECK(py[0] == doctest::Approx(phi_cdf(-0.4 - mu)).epsilon(1e-12));
  CHECK(py[1] == doctest::Approx(phi_cdf(0.6 - mu) - phi_cdf(-0.4 - mu)).epsilon(1e-12));
  CHECK(py[2] == doctest::Approx(1 - phi_cdf(0.6 - mu)).epsilon(1e-12));
  const double e2 = std::exp(-1.5 + 0.5 * 4 - 0.8 + 0.2 * 5 + 0.3);
  const double e3 = std::exp(0.8 - 0.4 * 4 + 1.0 - 0.1 * 5 - 0.5);
  const auto px = x_probabilities(g, a);
  CHECK(px[0] == doctest::Approx(1 / (1 + e2 + e3)).epsilon(1e-12));
  CHECK(px[1] == doctest::Approx(e2 / (1 + e2 + e3)).epsilon(1e-12));
  CHECK(px[2] == doctest::Approx(e3 / (1 + e2 + e3)).epsilon(1e-12));
}

TEST_CASE("replicate cells are the averaged conditional probabilities") {
  const GenConfig g = default_generator();
  const MixedDataset a = shared_data(g, 40, 7);
  const auto rep = generate_fusion_replicate(a, g);
  const auto cells = tracked_cells(g);
  REQUIRE(rep.cells.size() == cells.size());
  // Spot-check every cell against a direct sum.
  for (std::size_t c = 0; c < cells.size(); c += 7) {
    const auto& cell = cells[c];
    const int j = a.column_index(cell.shared);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (a.value(i, static_cast<std::size_t>(j)) != cell.shared_level) continue;
      std::vector<double> row(a.cols());
      for (std::size_t k = 0; k < a.cols(); ++k) row[k] = a.value(i, k);
      const auto p = cell.target == g.x.name ? x_probabilities(g, row) : y_probabilities(g, row);
      s += p[static_cast<std::size_t>(cell.target_level - 1)];
    }
    CHECK(rep.cells[c] == doctest::Approx(s / 40.0).epsilon(1e-12));
  }
  // Each (target, shared variable) block is a joint distribution.
  for (std::size_t c = 0; c < cells.size();) {
    std::size_t e = c;
    double s = 0.0;
    while (e < cells.size() && cells[e].target == cells[c].target && cells[e].shared == cells[c].shared) s += rep.cells[e++];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    c = e;
  }
}

TEST_CASE("population cells converge to the sample-conditional cells") {
  GenConfig g = default_generator();
  const auto pop = population_cells(g, 50000);
  const auto rep = generate_fusion_replicate(shared_data(g, 50000, 11), g);
  double worst = 0.0;
  for (std::size_t c = 0; c < pop.size(); ++c) worst = std::max(worst, std::abs(pop[c] - rep.cells[c]));
  CHECK(worst < 0.01);
}

TEST_CASE("generated targets are conditionally independent given A") {
  // X and Z depend on A only through (o3, n3), so those strata suffice.
  GenConfig g = default_generator();
  using T = DesignTerm;
  g.z.terms.terms = {T::intercept(), T::linear("o3"), T::dummy("n3", 2)};
  g.z.coef = (Eigen::VectorXd(3) << -1.0, 0.5, 0.8).finished();
  g.x.terms.terms = {T::intercept(), T::linear("o3"), T::dummy("n3", 2)};
  g.x.coef = (Eigen::MatrixXd(2, 3) << -1.0, 0.5, -0.8, 0.5, -0.4, 1.0).finished();
  g.seed = 21;
  const int n = 100000;
  const auto rep = generate_fusion_replicate(shared_data(g, n, 21), g);
  // Plug-in bias is about (levels - 1)(bins - 1) / 2n per stratum: 10 strata here.
  const double cmi = stratified_cmi(rep.values, rep.schema, "x", "z", {"o3", "n3"}, 4);
  CHECK(cmi < 3.0 * 10 * 6.0 / (2.0 * n));
  // Ignoring n3 leaves a dependence the estimator sees.
  CHECK(stratified_cmi(rep.values, rep.schema, "x", "z", {"o3"}, 4) > 10 * cmi);

  // A permutation test within the o3 x n3 strata does not reject.
  const int m = 5000;
  Eigen::MatrixXd sub = rep.values.topRows(m);
  const double observed = stratified_cmi(sub, rep.schema, "x", "z", {"o3", "n3"}, 4);
  const Eigen::Index xc = static_cast<Eigen::Index>(g.shared.size()) + 2;
  int above = 0;
  const int perms = 199;
  for (int b = 0; b < perms; ++b) {
    Rng rng(4, static_cast<std::uint64_t>(b), StreamTag::Test, 0);
    Eigen::MatrixXd p = sub;
    std::map<std::pair<int, int>, std::vector<Eigen::Index>> strata;
    for (Eigen::Index i = 0; i < m; ++i) strata[{static_cast<int>(sub(i, 2)), static_cast<int>(sub(i, 8))}].push_back(i);
    for (auto& [key, rows] : strata) {
      std::vector<double> xs;
      for (auto i : rows) xs.push_back(sub(i, xc));
      std::shuffle(xs.begin(), xs.end(), rng);
      for (std::size_t t = 0; t < rows.size(); ++t) p(rows[t], xc) = xs[t];
    }
    above += stratified_cmi(p, rep.schema, "x", "z", {"o3", "n3"}, 4) >= observed;
  }
  CHECK((above + 1.0) / (perms + 1.0) > 0.01);
}

TEST_CASE("three-way blanking") {
  const GenConfig g = default_generator();
  const auto rep = generate_fusion_replicate(shared_data(g, 3, 1), g);
  const Eigen::Index a = static_cast<Eigen::Index>(g.shared.size());
  const Eigen::MatrixXd b3 = blank_three_way(rep.values, rep.schema);
  // Columns: z, y, x after the shared block.
  CHECK((std::isnan(b3(0, a)) && !std::isnan(b3(0, a + 1)) && std::isnan(b3(0, a + 2))));
  CHECK((!std::isnan(b3(1, a)) && std::isnan(b3(1, a + 1)) && std::isnan(b3(1, a + 2))));
  CHECK((std::isnan(b3(2, a)) && std::isnan(b3(2, a + 1)) && !std::isnan(b3(2, a + 2))));

  for (int n : {30, 31, 32}) {
    const auto r = generate_fusion_replicate(shared_data(g, n, 2), g);
    const Eigen::MatrixXd b = blank_three_way(r.values, r.schema);
    CHECK(!b.leftCols(a).array().isNaN().any());
    CHECK(b.leftCols(a) == r.values.leftCols(a));
    const int per = n / 3;
    for (int c = 0; c < 3; ++c) {
      const auto missing = b.col(a + c).array().isNaN().count();
      // z is missing in blocks 1 and 3, y in 2 and 3, x in 1 and 2.
      const int want = c == 2 ? 2 * per : per + (n - 2 * per);
      CHECK(missing == want);
    }
    if (n == 30)
      for (int c = 0; c < 3; ++c) CHECK(b.col(a + c).array().isNaN().count() == 2 * n / 3);
  }
  CHECK_THROWS_AS(blank_three_way(rep.values.topRows(2), rep.schema), Error);
}

TEST_CASE("statistical matching donor rules") {
  const Schema s = matching_schema();
  SUBCASE("unique exact donor") {
    Eigen::MatrixXd v(4, 3);
    v << 1, 1, kNa,  //
        1, 1, 5.0,   //
        2, 1, 6.0,   //
        2, 2, 7.0;
    const auto out = statistical_matching(v, s, {"a", "b"}, {"t"}, 1);
    CHECK(out(0, 2) == 5.0);
    CHECK(out.bottomRows(3) == v.bottomRows(3));
  }
  SUBCASE("distances 0, 1, 2: the closest donor always wins") {
    Eigen::MatrixXd v(4, 3);
    v << 3, 2, kNa,  //
        1, 1, 10.0,  //
        3, 1, 20.0,  //
        3, 2, 30.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed)
      CHECK(statistical_matching(v, s, {"a", "b"}, {"t"}, seed)(0, 2) == 30.0);
  }
  SUBCASE("equidistant donors are picked with probability one half") {
    Eigen::MatrixXd v(3, 3);
    v << 1, 1, kNa,  //
        1, 2, 1.0,   //
        2, 1, 2.0;
    const int trials = 4000;
    int first = 0;
    for (int seed = 0; seed < trials; ++seed)
      first += statistical_matching(v, s, {"a", "b"}, {"t"}, static_cast<std::uint64_t>(seed))(0, 2) == 1.0;
    CHECK(std::abs(first - trials / 2.0) < 4.0 * std::sqrt(trials / 4.0));
    CHECK(statistical_matching(v, s, {"a", "b"}, {"t"}, 9) == statistical_matching(v, s, {"a", "b"}, {"t"}, 9));
  }
  SUBCASE("no donor") {
    Eigen::MatrixXd v(2, 3);
    v << 1, 1, kNa, 2, 2, kNa;
    try {
      statistical_matching(v, s, {"a", "b"}, {"t"}, 1);
      FAIL("expected NoDonor");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoDonor);
    }
  }
}

TEST_CASE("cell estimates and stratified CMI by hand") {
  const Schema s = {{"a", Role::Fixed, Kind::Nominal, 2},
                    {"z", Role::Random, Kind::Continuous, 0},
                    {"x", Role::Random, Kind::Nominal, 2}};
  Eigen::MatrixXd v(8, 3);
  // Within a = 1 x follows the z bin exactly; within a = 2 x is independent of z.
  v << 1, 0.1, 1,  //
      1, 0.2, 1,   //
      1, 0.8, 2,   //
      1, 0.9, 2,   //
      2, 0.1, 1,   //
      2, 0.2, 2,   //
      2, 0.8, 1,   //
      2, 0.9, 2;
  const std::vector<TrackedCell> cells = {{"x", 1, "a", 1}, {"x", 2, "a", 2}};
  const auto est = cell_estimates(v, s, cells);
  CHECK(est[0] == doctest::Approx(0.25));
  CHECK(est[1] == doctest::Approx(0.25));
  CHECK(stratified_cmi(v, s, "x", "z", {"a"}, 2) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(stratified_cmi(v, s, "x", "z", {}, 2) == doctest::Approx(mi_from_table((Eigen::MatrixXd(2, 2) << 3, 1, 1, 3).finished())));
}

TEST_CASE("cross-block regression recovers the generator on complete data") {
  GenConfig g = default_generator();
  g.z.noise_sd = 0.05;
  const auto rep = generate_fusion_replicate(shared_data(g, 4000, 8), g);
  const auto fit = cross_block_regression(rep.values, rep.schema, g);
  REQUIRE(fit.terms.size() == 1 + 2 + 2 + 4);
  CHECK(fit.terms[1] == "x=2");
  CHECK(fit.terms[4] == "y=3");
  CHECK(fit.coef(0) == doctest::Approx(g.z.coef(0)).epsilon(0.01));
  for (int t = 1; t <= 4; ++t) CHECK(std::abs(fit.coef(t)) < 5 * std::sqrt(fit.variance(t)));
  for (int t = 1; t < 5; ++t) CHECK(fit.coef(4 + t) == doctest::Approx(g.z.coef(t)).epsilon(0.02));
  CHECK(fit.df == 4000 - 9);
}

TEST_CASE("study config JSON") {
  const StudyConfig s = default_study();
  const auto j = study_to_json(s);
  const StudyConfig back = study_from_json(j);
  CHECK(study_to_json(back) == j);
  CHECK(study_from_json(nlohmann::json::object()).n == 600);
  CHECK(generator_to_json(generator_from_json(generator_to_json(s.generator))) == generator_to_json(s.generator));
  CHECK_THROWS_AS(study_from_json({{"replicates", 3}}), Error);

  auto bad = [&](auto edit) {
    StudyConfig c = default_study();
    edit(c);
    CHECK_THROWS_AS(validate_study(c), Error);
  };
  bad([](StudyConfig& c) { c.completions = 1; });
  bad([](StudyConfig& c) { c.n = 2; });
  bad([](StudyConfig& c) { c.burn_in = c.iterations; });
  bad([](StudyConfig& c) { c.variants[0].features = {"nope"}; });
  bad([](StudyConfig& c) { c.variants[0].label = "joint"; });
  bad([](StudyConfig& c) { c.generator.shared[0].probs[0] += 0.1; });
  bad([](StudyConfig& c) { c.generator.x.coef.resize(2, 3); });
  bad([](StudyConfig& c) { c.generator.y.cutoffs = {1.0, 0.0}; });
  bad([](StudyConfig& c) {
    c.oracle = c.joint = c.matching = false;
    c.variants.clear();
  });
}

TEST_CASE("oracle coverage is near nominal") {
  StudyConfig s = default_study();
  s.joint = s.matching = false;
  s.variants.clear();
  s.replications = 20;
  s.population_samples = 100000;
  const auto report = run_fusion_study(s);
  REQUIRE(report.methods.size() == 1);
  CHECK(report.methods[0].method == "oracle");
  CHECK(report.methods[0].coverage == doctest::Approx(0.95).epsilon(0.03));
  CHECK(report.methods[0].q25_abs_error <= report.methods[0].q75_abs_error);
  CHECK(report.per_replication.size() == 20);
  for (const auto& r : report.regression)
    if (r.cross) CHECK(r.truth == 0.0);
}

TEST_CASE("small study runs every method and is thread independent") {
  StudyConfig s = default_study();
  s.n = 90;
  s.replications = 2;
  s.completions = 2;
  s.iterations = 40;
  s.burn_in = 20;
  s.truncation = 20;
  s.variants[0].dstar = 0.25;
  s.population_samples = 2000;
  const auto one = run_fusion_study(s);
  s.threads = 2;
  const auto two = run_fusion_study(s);
  CHECK(report_to_json(one) == report_to_json(two));
  std::vector<std::string> names;
  for (const auto& m : one.methods) {
    names.push_back(m.method);
    CHECK(m.coverage >= 0.0);
    CHECK(m.coverage <= 1.0);
    CHECK(m.q25_abs_error <= m.q75_abs_error);
  }
  CHECK(names == std::vector<std::string>{"oracle", "C-2S", "joint", "matching"});
  std::ostringstream csv;
  write_report_csv(csv, one);
  CHECK(csv.str().rfind("method,metric,value,mc_se\noracle,coverage,", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 1 + 4 * 6);
}
