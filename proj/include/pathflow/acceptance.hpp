#pragma once

// The acceptance harness: twelve property checks with closed-form or independent oracles.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pathflow/segment.hpp"

namespace pathflow {

enum class Suite { kFast, kFull };

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::string detail;
  /// Key numbers at %.17g, compared across thread counts by the determinism check.
  std::string payload;
};

struct AcceptanceOptions {
  Suite suite = Suite::kFull;
  /// Criteria to run (1..12); empty runs all.
  std::vector<int> only;
  /// Shift operator under test, e^{k dt A}; the library shift by default. Mutation hook.
  std::function<LiftedState(const LiftedView&, int)> shift_op;
  /// Thread counts compared by criterion 12.
  std::vector<int> thread_counts{1, 8};
  /// Called after each criterion completes.
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

/// One line per criterion: PASS/FAIL, id, name, time and detail.
std::string format_result(const CriterionResult& r);
/// CSV scorecard: id,name,passed,seconds,budget_seconds,detail.
void write_scorecard_csv(std::ostream& os, const std::vector<CriterionResult>& results);

}  // namespace pathflow
