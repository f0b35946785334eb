#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cmmmix/cli.hpp"
#include "cmmmix/error.hpp"

using namespace cmmmix;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = CMMMIX_FIXTURES_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cmmmix");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cmmmix_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Writes the smoke config with `patch` merged in, next to copies of the data.
fs::path patched_config(const fs::path& dir, const nlohmann::json& patch) {
  nlohmann::json j;
  std::ifstream(kFixtures / "smoke_run.json") >> j;
  j["data"] = (kFixtures / "smoke.csv").string();
  j["schema"] = (kFixtures / "smoke_schema.json").string();
  j.merge_patch(patch);
  const fs::path p = dir / "run.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("run config json round trip keeps every field") {
  nlohmann::json j;
  std::ifstream(kFixtures / "smoke_run.json") >> j;
  const auto cfg = run_config_from_json(j, kFixtures);
  CHECK(cfg.data == kFixtures / "smoke.csv");
  CHECK(cfg.chain.iterations == 500);
  CHECK(cfg.chains == 2);
  const auto again = run_config_from_json(run_config_to_json(cfg));
  CHECK(run_config_to_json(again) == run_config_to_json(cfg));
}

TEST_CASE("config errors exit with 2 before writing anything") {
  const auto dir = scratch("errors");
  const auto out = dir / "out";
  SUBCASE("burn-in not below iterations") {
    const auto cfg = patched_config(dir, {{"chain", {{"iterations", 10}, {"burn_in", 10}}}});
    CHECK(cli({"fit", "-c", cfg.string(), "-o", out.string()}).code == 2);
  }
  SUBCASE("unknown key") {
    const auto cfg = patched_config(dir, {{"iterations", 10}});
    const auto r = cli({"fit", "-c", cfg.string(), "-o", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("iterations") != std::string::npos);
  }
  SUBCASE("unknown hyperprior") {
    const auto cfg = patched_config(dir, {{"hyperpriors", {{"gamma", 1.0}}}});
    CHECK(cli({"fit", "-c", cfg.string(), "-o", out.string()}).code == 2);
  }
  SUBCASE("missing data file") {
    const auto cfg = patched_config(dir, {{"data", (dir / "absent.csv").string()}});
    CHECK(cli({"fit", "-c", cfg.string(), "-o", out.string()}).code == 2);
  }
  SUBCASE("missing config file") {
    CHECK(cli({"fit", "-c", (dir / "absent.json").string()}).code == 2);
  }
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code != 0);
  CHECK(cli({"no-such-command"}).code != 0);
  CHECK(cli({"fit"}).code != 0);
}

TEST_CASE("query before fit reports the missing draws") {
  const auto dir = scratch("nodraws");
  const auto r = cli({"query", "-c", (kFixtures / "smoke_run.json").string(), "-q",
                      (kFixtures / "smoke_queries.json").string(), "-o", (dir / "out").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("run fit first") != std::string::npos);
}

TEST_CASE("fit, query and report write their files") {
  const auto dir = scratch("fit");
  const auto cfg = patched_config(dir, {{"chain", {{"iterations", 120}, {"burn_in", 60}, {"thin", 3}}}});
  const auto out = dir / "out";
  REQUIRE(cli({"fit", "-c", cfg.string(), "-o", out.string()}).code == 0);
  for (const char* f : {"completed_c0_1.csv", "completed_c1_3.csv", "trace_c0.csv", "draws_c1.bin",
                        "config.resolved.json", "fit_summary.json", "checkpoint.bin.0"})
    CHECK(fs::exists(out / f));

  REQUIRE(cli({"query", "-c", cfg.string(), "-o", out.string(), "-q", (kFixtures / "smoke_queries.json").string()})
              .code == 0);
  std::ifstream summary(out / "query_summary.csv");
  std::string header, line;
  std::getline(summary, header);
  CHECK(header == "label,type,mean,lower,upper,level,draws");
  int rows = 0;
  while (std::getline(summary, line)) {
    ++rows;
    if (line.rfind("total,", 0) == 0) {
      // Pr(X = x | f) summed over x is 1 in every draw.
      std::stringstream ss(line);
      std::string label, type, mean;
      std::getline(ss, label, ',');
      std::getline(ss, type, ',');
      std::getline(ss, mean, ',');
      CHECK(std::stod(mean) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(rows == 5);

  REQUIRE(cli({"report", "-c", cfg.string(), "-o", out.string()}).code == 0);
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "report.json"));
}

TEST_CASE("output directory: flag over environment over config") {
  const auto dir = scratch("outdir");
  const auto cfg = patched_config(dir, {{"output_dir", (dir / "from_config").string()}});
  const auto show = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"show-config", "-c", cfg.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return nlohmann::json::parse(cli(args).out).at("output_dir").get<std::string>();
  };
  ::unsetenv("CMMMIX_OUTPUT_DIR");
  CHECK(show({}) == (dir / "from_config").string());
  ::setenv("CMMMIX_OUTPUT_DIR", (dir / "from_env").string().c_str(), 1);
  CHECK(show({}) == (dir / "from_env").string());
  CHECK(show({"-o", (dir / "from_flag").string()}) == (dir / "from_flag").string());
  ::unsetenv("CMMMIX_OUTPUT_DIR");
}

TEST_CASE("show-config prints every default") {
  const auto r = cli({"show-config"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("truncation") == 50);
  CHECK(j.at("chain").at("iterations") == 2000);
  const auto s = nlohmann::json::parse(cli({"show-config", "--study"}).out);
  CHECK(s.at("n") == 600);
  CHECK(s.at("replications") == 10);
}

TEST_CASE("select-features writes the report") {
  const auto dir = scratch("select");
  const auto r = cli({"select-features", "-c", (kFixtures / "smoke_run.json").string(), "-o", dir.string()});
  REQUIRE(r.code == 0);
  nlohmann::json j;
  std::ifstream(dir / "mi_report.json") >> j;
  CHECK(j.contains("weights"));
  CHECK(fs::exists(dir / "mi_report.txt"));
}

TEST_CASE("draws file round trip and corruption") {
  const auto dir = scratch("draws");
  const auto cfg = patched_config(dir, {{"chain", {{"iterations", 40}, {"burn_in", 20}, {"thin", 5}}}, {"chains", 1}});
  const auto out = dir / "out";
  REQUIRE(cli({"fit", "-c", cfg.string(), "-o", out.string()}).code == 0);
  const auto run = load_run_config(cfg);
  const Model model = build_model(run);
  const auto draws = load_draws(out / "draws_c0.bin", model);
  CHECK(draws.size() == 4);
  save_draws(dir / "again.bin", draws);
  std::ifstream a(out / "draws_c0.bin", std::ios::binary), b(dir / "again.bin", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  std::ofstream(dir / "bad.bin") << "not a draws file";
  CHECK_THROWS_AS(load_draws(dir / "bad.bin", model), Error);
}
