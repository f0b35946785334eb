#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cmmmix/data.hpp"
#include "cmmmix/error.hpp"

using namespace cmmmix;

namespace {

const double NA = std::numeric_limits<double>::quiet_NaN();

Schema mixed_schema() {
  return {
      {"y", Role::Random, Kind::Ordinal, 3},
      {"z", Role::Random, Kind::Continuous, 0},
      {"x", Role::Random, Kind::Nominal, 3},
      {"fo", Role::Fixed, Kind::Ordinal, 4},
      {"fz", Role::Fixed, Kind::Continuous, 0},
  };
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected cmmmix::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("csv with ordinal values in range has no missing cells") {
  Schema s{{"y", Role::Random, Kind::Ordinal, 3}};
  std::istringstream in("y\n1\n2\n3\n");
  const auto d = parse_csv(in, s);
  CHECK(d.rows() == 3);
  CHECK(d.missing_count() == 0);
}

TEST_CASE("out of range ordinal level is rejected") {
  Schema s{{"y", Role::Random, Kind::Ordinal, 3}};
  std::istringstream in("y\n1\n5\n");
  CHECK(code_of([&] { parse_csv(in, s); }) == ErrorCode::OutOfRangeLevel);
}

TEST_CASE("ingestion errors") {
  Schema s{{"y", Role::Random, Kind::Ordinal, 3}, {"f", Role::Fixed, Kind::Nominal, 2}};
  {
    std::istringstream in("y,f,extra\n1,1,0\n");
    CHECK(code_of([&] { parse_csv(in, s); }) == ErrorCode::UnknownColumn);
  }
  {
    std::istringstream in("y\n1\n");
    CHECK(code_of([&] { parse_csv(in, s); }) == ErrorCode::MissingColumn);
  }
  {
    std::istringstream in("y,f\n1,NA\n");
    CHECK(code_of([&] { parse_csv(in, s); }) == ErrorCode::MissingFixedValue);
  }
  {
    Schema c{{"z", Role::Random, Kind::Continuous, 0}};
    std::istringstream in("z\n1.5\nabc\n");
    CHECK(code_of([&] { parse_csv(in, c); }) == ErrorCode::NonNumericContinuous);
  }
}

TEST_CASE("continuous column is standardized with divisor n-1") {
  Schema s{{"z", Role::Random, Kind::Continuous, 0}};
  std::istringstream in("z\n1\n2\n3\n");
  const auto d = parse_csv(in, s);
  // mean 2, sum of squares 2 over n-1 = 2 gives sd 1
  CHECK(d.standardization(0).mean == doctest::Approx(2.0));
  CHECK(d.standardization(0).sd == doctest::Approx(1.0));
  CHECK(d.value(0, 0) == doctest::Approx(-1.0));
  CHECK(d.value(1, 0) == doctest::Approx(0.0));
  CHECK(d.value(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("missing tokens and quoted fields") {
  Schema s{{"z", Role::Random, Kind::Continuous, 0}, {"x", Role::Random, Kind::Nominal, 2}};
  std::istringstream in("\"x\",z\n\"1\",NA\n,4\n2,\"6\"\n");
  const auto d = parse_csv(in, s);
  CHECK(d.missing(0, 0));
  CHECK(d.missing(1, 1));
  CHECK_FALSE(d.missing(2, 0));
  CHECK(d.missing_count() == 2);
  CHECK(d.standardization(0).mean == doctest::Approx(5.0));
}

TEST_CASE("standardize then destandardize is the identity") {
  Eigen::MatrixXd v(5, 5);
  v << 1, 10.5, 1, 1, -3.0,
       2, 12.25, 2, 2, 7.5,
       3, NA, 3, 3, 0.125,
       1, -4.0, 1, 4, 2.0,
       2, 9.0, NA, 1, 100.0;
  const MixedDataset d(mixed_schema(), v);
  const auto back = d.original_values();
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (std::isnan(v(i, j))) {
        CHECK(std::isnan(back(i, j)));
      } else {
        CHECK(std::abs(back(i, j) - v(i, j)) < 1e-9);
      }
    }
  for (int c : {1, 4}) {
    double sum = 0, sq = 0;
    int n = 0;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      if (!d.missing(i, c)) {
        sum += d.value(i, c);
        ++n;
      }
    const double mean = sum / n;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      if (!d.missing(i, c)) sq += (d.value(i, c) - mean) * (d.value(i, c) - mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(sq / (n - 1)) - 1.0) < 1e-9);
  }
}

TEST_CASE("csv round trip preserves values") {
  Eigen::MatrixXd v(2, 5);
  v << 1, 0.1, 2, 3, 1.0 / 3.0,
       3, NA, 1, 4, -2.5;
  std::ostringstream out;
  write_csv(out, mixed_schema(), v);
  std::istringstream in(out.str());
  const auto d = parse_csv(in, mixed_schema());
  const auto back = d.original_values();
  CHECK(back(0, 4) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(d.missing(1, 1));
  CHECK(back(1, 0) == 3);
}

TEST_CASE("design vectors") {
  Schema s{{"x1", Role::Fixed, Kind::Nominal, 3}, {"zf", Role::Fixed, Kind::Continuous, 0}};
  std::vector<double> row{2.0, 0.5};

  SUBCASE("intercept only") {
    const Design d(s, DesignConfig{{DesignTerm::intercept()}});
    CHECK(build_design_vector(row, d).size() == 1);
    CHECK(build_design_vector(row, d)(0) == 1.0);
  }
  SUBCASE("dummy coding") {
    const Design d(s, DesignConfig{{DesignTerm::intercept(), DesignTerm::dummy("x1", 2),
                                    DesignTerm::dummy("x1", 3)}});
    const auto v = build_design_vector(row, d);
    CHECK(v(0) == 1.0);
    CHECK(v(1) == 1.0);
    CHECK(v(2) == 0.0);
  }
  SUBCASE("interaction of dummy and linear term") {
    const Design d(s, DesignConfig{{DesignTerm::intercept(), DesignTerm::linear("zf"),
                                    DesignTerm::interaction(DesignTerm::dummy("x1", 2),
                                                            DesignTerm::linear("zf"))}});
    const auto v = build_design_vector(row, d);
    CHECK(v(0) == 1.0);
    CHECK(v(1) == 0.5);
    CHECK(v(2) == 0.5);
  }
  SUBCASE("unresolved missing cell") {
    const Design d(s, DesignConfig{{DesignTerm::intercept(), DesignTerm::dummy("x1", 2)}});
    std::vector<double> bad{NA, 0.5};
    CHECK(code_of([&] { build_design_vector(bad, d); }) == ErrorCode::UnresolvedMissing);
  }
}

TEST_CASE("design rejects random ordinal or continuous references and a missing intercept") {
  const auto s = mixed_schema();
  CHECK(code_of([&] { Design(s, DesignConfig{{DesignTerm::dummy("x", 2)}}); }) ==
        ErrorCode::InvalidDesign);
  CHECK(code_of([&] {
          Design(s, DesignConfig{{DesignTerm::intercept(), DesignTerm::dummy("y", 2)}});
        }) == ErrorCode::InvalidDesign);
  CHECK(code_of([&] {
          Design(s, DesignConfig{{DesignTerm::intercept(), DesignTerm::linear("z")}});
        }) == ErrorCode::InvalidDesign);
}

TEST_CASE("default design is intercept plus zero-one dummies when no fixed continuous") {
  Schema s{{"y", Role::Random, Kind::Ordinal, 3},
           {"x", Role::Random, Kind::Nominal, 3},
           {"fo", Role::Fixed, Kind::Ordinal, 4},
           {"fn", Role::Fixed, Kind::Nominal, 2}};
  const Design d(s, default_design(s));
  CHECK(d.size() == 1 + 2 + 3 + 1);
  for (double x : {1.0, 2.0, 3.0})
    for (double fo : {1.0, 2.0, 3.0, 4.0})
      for (double fn : {1.0, 2.0}) {
        std::vector<double> row{1.0, x, fo, fn};
        const auto v = d.evaluate(row);
        CHECK(v(0) == 1.0);
        CHECK(v.sum() == 1.0 + (x != 1) + (fo != 1) + (fn != 1));
        for (Eigen::Index k = 0; k < v.size(); ++k) CHECK((v(k) == 0.0 || v(k) == 1.0));
      }
  const Design lin(s, default_design(s, true));
  CHECK(lin.size() == 1 + 2 + 1 + 1);
}

TEST_CASE("design json round trip") {
  DesignConfig c{{DesignTerm::intercept(), DesignTerm::dummy("fo", 3),
                  DesignTerm::interaction(DesignTerm::dummy("x", 2), DesignTerm::linear("fz"))}};
  CHECK(design_from_json(design_to_json(c)).terms == c.terms);
}

TEST_CASE("schema json round trip and validation") {
  const auto s = mixed_schema();
  CHECK(schema_from_json(schema_to_json(s)) == s);
  Schema bad{{"y", Role::Random, Kind::Ordinal, 1}};
  CHECK(code_of([&] { validate_schema(bad); }) == ErrorCode::InvalidSchema);
}
