#pragma once

// Registry of named coefficient sets with their reference values.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathflow/control.hpp"
#include "pathflow/forward.hpp"

namespace pathflow {

/// How a reference value is known: by inspection, by a short derivation, or quoted.
enum class Provenance { kElementary, kDerived, kLiterature };

std::string_view provenance_name(Provenance p);

struct ClosedForm {
  std::string formula;
  std::optional<Provenance> provenance;
  /// Reference u(t, x); empty when the closed form is not a value function.
  std::function<double(double t, const LiftedView& x)> value;
};

struct Benchmark {
  std::string name;
  std::string description;
  double horizon = 1.0;
  std::function<CoefficientSet()> coefficients;
  /// Default initial past profile.
  SmoothProfile profile;
  /// Unlifted drift b_t(gamma), for benchmarks with path-dependent drift and constant history.
  PathDriftFn path_drift;
  std::optional<ClosedForm> closed_form;
  std::function<ControlProblem()> control;

  bool has_control() const { return static_cast<bool>(control); }
};

/// Registry in listing order. Every closed form is checked to carry a provenance label.
const std::vector<Benchmark>& benchmark_registry();
/// Throws BenchmarkUnknown.
const Benchmark& find_benchmark(std::string_view name);

/// Reference value of a benchmark; throws ConfigInvalid if it has none or it is untagged.
double reference_value(const Benchmark& b, double t, const LiftedView& x);

/// One row per entry: name, description, closed form, provenance.
nlohmann::json benchmark_table();

}  // namespace pathflow
