// pathflow command-line front end: run a config, list benchmarks, run the acceptance suite.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pathflow/acceptance.hpp"
#include "pathflow/benchmarks.hpp"
#include "pathflow/error.hpp"
#include "pathflow/experiment.hpp"

namespace {

using nlohmann::json;

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed,
                std::optional<std::string> out_dir) {
  std::ifstream is(config_path);
  if (!is) throw pathflow::Error(pathflow::ErrorKind::kConfigInvalid, "config: cannot open " + config_path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw pathflow::Error(pathflow::ErrorKind::kConfigInvalid, std::string("config: not valid JSON: ") + e.what());
  }
  // Overrides go into the document so the report echoes what actually ran.
  if (doc.is_object()) {
    if (seed) doc["mc"]["seed"] = *seed;
    if (out_dir) doc["output_dir"] = *out_dir;
  }
  const pathflow::RunReport rep = pathflow::run_experiment(pathflow::parse_config(doc));
  std::cout << rep.to_json().dump(2) << "\n";
  for (const auto& f : rep.failed_assertions) std::cerr << "assertion failed: " << f << "\n";
  return rep.exit_code;
}

int list_command(bool as_json) {
  const json table = pathflow::benchmark_table();
  if (as_json) {
    std::cout << table.dump(2) << "\n";
    return 0;
  }
  for (const auto& row : table) {
    std::cout << row["name"].get<std::string>() << "\n  " << row["description"].get<std::string>() << "\n";
    if (!row["closed_form"].is_null()) {
      std::cout << "  closed form: " << row["closed_form"].get<std::string>() << " ["
                << row["provenance"].get<std::string>() << "]\n";
    } else {
      std::cout << "  closed form: none\n";
    }
  }
  return 0;
}

int accept_command(const std::string& suite, const std::string& scorecard, const std::vector<int>& only) {
  pathflow::AcceptanceOptions opts;
  opts.suite = suite == "fast" ? pathflow::Suite::kFast : pathflow::Suite::kFull;
  opts.only = only;
  opts.on_result = [](const pathflow::CriterionResult& r) { std::cout << pathflow::format_result(r) << std::endl; };
  const auto results = pathflow::run_acceptance(opts);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  if (!scorecard.empty()) {
    std::ofstream os(scorecard);
    if (!os) throw pathflow::Error(pathflow::ErrorKind::kFormat, "cannot write " + scorecard);
    pathflow::write_scorecard_csv(os, results);
  }
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-dependent forward-backward Monte Carlo experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override mc.seed");
  run->add_option("--out", out_dir, "Override output_dir");

  auto* bench = app.add_subcommand("bench", "Benchmark registry");
  bench->require_subcommand(1);
  auto* list = bench->add_subcommand("list", "Print the registry");
  bool as_json = false;
  list->add_flag("--json", as_json, "Print as JSON");

  auto* accept = app.add_subcommand("accept", "Run the acceptance criteria");
  std::string suite = "full";
  std::string scorecard = "scorecard.csv";
  std::vector<int> only;
  accept->add_option("--suite", suite, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  accept->add_option("--scorecard", scorecard, "CSV scorecard path (empty to skip)");
  accept->add_option("--only", only, "Criterion ids to run")->check(CLI::Range(1, 12));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return run_command(config_path, seed, out_dir);
    if (*list) return list_command(as_json);
    if (*accept) return accept_command(suite, scorecard, only);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
