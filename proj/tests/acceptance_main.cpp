// Runs the acceptance criteria, prints one line per criterion and writes the scorecard.

#include <cstring>
#include <fstream>
#include <iostream>

#include "pathflow/acceptance.hpp"

int main(int argc, char** argv) {
  pathflow::AcceptanceOptions opts;
  std::string scorecard = "acceptance_scorecard.csv";
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--fast") == 0) {
      opts.suite = pathflow::Suite::kFast;
    } else if (std::strcmp(argv[i], "--scorecard") == 0 && i + 1 < argc) {
      scorecard = argv[++i];
    } else {
      std::cerr << "usage: pathflow_acceptance [--fast] [--scorecard FILE]\n";
      return 1;
    }
  }
  opts.on_result = [](const pathflow::CriterionResult& r) { std::cout << pathflow::format_result(r) << std::endl; };
  const auto results = pathflow::run_acceptance(opts);
  std::ofstream os(scorecard);
  pathflow::write_scorecard_csv(os, results);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " acceptance criteria passed\n";
  return failed == 0 ? 0 : 1;
}
