#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pathflow/acceptance.hpp"
#include "pathflow/benchmarks.hpp"
#include "pathflow/error.hpp"
#include "pathflow/experiment.hpp"

namespace pathflow {
namespace {

using nlohmann::json;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidArgument;
}

TEST(Registry, CoversTheBenchmarkFamilies) {
  const auto& reg = benchmark_registry();
  EXPECT_GE(reg.size(), 8u);
  std::set<std::string> names;
  for (const auto& b : reg) names.insert(b.name);
  for (const char* n : {"heat-present-linear", "heat-present-square", "exponential-driver", "point-delay",
                        "delay-integral", "linear-bsde", "lq-control", "truncated-hamiltonian", "mollifier-probes"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

TEST(Registry, ProvenanceTags) {
  const std::map<std::string, std::string> expected{
      {"heat-present-linear", "elementary"}, {"heat-present-square", "elementary"},
      {"exponential-driver", "derived"},     {"point-delay", "derived"},
      {"linear-bsde", "derived"},            {"lq-control", "derived"},
      {"truncated-hamiltonian", "literature"}, {"mollifier-probes", "elementary"}};
  for (const auto& row : benchmark_table()) {
    const std::string name = row["name"];
    if (auto it = expected.find(name); it != expected.end()) {
      EXPECT_EQ(row["provenance"], it->second) << name;
    } else {
      EXPECT_TRUE(row["closed_form"].is_null()) << name;
    }
  }
}

TEST(Registry, UnknownAndUntagged) {
  EXPECT_EQ(kind_of([] { find_benchmark("no-such-benchmark"); }), ErrorKind::kBenchmarkUnknown);
  const Benchmark& b = find_benchmark("delay-integral");
  const PathGrid grid(1.0, 8);
  const LiftedState x(grid, 1);
  EXPECT_EQ(kind_of([&] { reference_value(b, 0.0, x); }), ErrorKind::kConfigInvalid);
}

TEST(Config, ValidationNamesTheField) {
  try {
    parse_config(json{{"benchmark", "heat-present-square"}, {"mode", "value"}, {"mc", {{"n_paths", -4}}}});
    FAIL() << "expected ConfigInvalid";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfigInvalid);
    EXPECT_NE(std::string(e.what()).find("mc.n_paths"), std::string::npos) << e.what();
  }
  EXPECT_EQ(kind_of([] { parse_config(json{{"benchmark", "nope"}, {"mode", "value"}}); }), ErrorKind::kBenchmarkUnknown);
  EXPECT_EQ(kind_of([] { parse_config(json{{"benchmark", "heat-present-square"}, {"mode", "dance"}}); }),
            ErrorKind::kConfigInvalid);
  EXPECT_EQ(kind_of([] {
              parse_config(json{{"benchmark", "heat-present-square"}, {"mode", "value"}, {"query", {{"t0", 0.013}}}});
            }),
            ErrorKind::kConfigInvalid);
}

json value_doc() {
  return {{"benchmark", "heat-present-square"},
          {"mode", "value"},
          {"grid", {{"T", 1.0}, {"N", 20}}},
          {"mc", {{"seed", 3}, {"n_paths", 4000}}},
          {"query", {{"t0", 0.0}, {"x0", {0.5}}}},
          {"assert", true}};
}

TEST(Run, ValueModeHeatSquare) {
  const RunReport r = run_experiment(parse_config(value_doc()));
  EXPECT_EQ(r.exit_code, 0);
  const double mean = r.payload["value"]["mean"];
  const double se = r.payload["value"]["std_error"];
  EXPECT_LE(std::abs(mean - 1.25), 3.0 * se);
  EXPECT_EQ(r.to_json()["config"], value_doc());
}

TEST(Run, IdenticalConfigIdenticalPayload) {
  const ExperimentConfig cfg = parse_config(value_doc());
  EXPECT_EQ(run_experiment(cfg).payload.dump(), run_experiment(cfg).payload.dump());
}

TEST(Run, ResidualRefinementOnDelayIntegral) {
  json doc{{"benchmark", "delay-integral"}, {"mode", "residual"}, {"mc", {{"seed", 2}, {"n_paths", 4000}}},
           {"levels", {32, 64, 128}}};
  const RunReport r = run_experiment(parse_config(doc));
  const auto& levels = r.payload["levels"];
  ASSERT_EQ(levels.size(), 3u);
  for (std::size_t l = 1; l < 3; ++l) {
    EXPECT_LE(std::abs(levels[l]["residual"].get<double>()), std::abs(levels[l - 1]["residual"].get<double>()));
  }
}

TEST(Run, WritesReportAndTables) {
  const auto dir = std::filesystem::temp_directory_path() / "pathflow_run_test";
  std::filesystem::remove_all(dir);
  json doc = value_doc();
  doc["output_dir"] = dir.string();
  run_experiment(parse_config(doc));
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "value.csv"));
  std::ifstream is(dir / "report.json");
  const json rep = json::parse(is);
  EXPECT_EQ(rep["seed"], 3);
  EXPECT_TRUE(rep.contains("build_id"));
  std::filesystem::remove_all(dir);
}

TEST(Run, FailedAssertionGivesExitCodeTwo) {
  // Coarsening instead of refining makes the residual grow, so the trend assertion fails.
  json doc{{"benchmark", "delay-integral"}, {"mode", "residual"}, {"mc", {{"seed", 2}, {"n_paths", 4000}}},
           {"levels", {64, 16}}, {"assert", true}};
  const RunReport r = run_experiment(parse_config(doc));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(r.failed_assertions.empty());
}

TEST(Run, AssertWithoutReferenceIsInvalid) {
  json doc{{"benchmark", "delay-integral"}, {"mode", "value"}, {"mc", {{"n_paths", 400}}}, {"assert", true}};
  EXPECT_EQ(kind_of([&] { run_experiment(parse_config(doc)); }), ErrorKind::kConfigInvalid);
}

TEST(Acceptance, ExactAlgebraPassesAndCatchesAShiftMutation) {
  AcceptanceOptions o;
  o.suite = Suite::kFast;
  o.only = {1};
  const auto good = run_acceptance(o);
  ASSERT_EQ(good.size(), 1u);
  EXPECT_TRUE(good[0].passed) << good[0].detail;

  o.shift_op = [](const LiftedView& x, int k) { return shift_steps(x, std::min(k + 1, x.grid().n_steps())); };
  const auto bad = run_acceptance(o);
  EXPECT_FALSE(bad[0].passed);
  EXPECT_NE(bad[0].detail.find("FAILED semigroup"), std::string::npos) << bad[0].detail;
}

TEST(Acceptance, ScorecardFormat) {
  AcceptanceOptions o;
  o.suite = Suite::kFast;
  o.only = {1, 10};
  std::ostringstream os;
  write_scorecard_csv(os, run_acceptance(o));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "id,name,passed,seconds,budget_seconds,detail");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

}  // namespace
}  // namespace pathflow
