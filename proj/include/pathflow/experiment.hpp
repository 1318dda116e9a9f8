#pragma once

// Config-driven experiment runner: one JSON document selects a benchmark, a grid, the noise
// and a mode, and produces a JSON report plus CSV tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathflow/benchmarks.hpp"
#include "pathflow/calculus.hpp"

namespace pathflow {

enum class ExperimentMode { kForward, kValue, kResidual, kDerivative, kMollify, kControl, kFlow };

std::string_view mode_name(ExperimentMode m);

struct ExperimentConfig {
  std::string benchmark;
  ExperimentMode mode = ExperimentMode::kValue;
  double horizon = 1.0;
  int n_steps = 50;
  std::uint64_t seed = 1;
  int n_paths = 10000;
  RegressionBasis basis;
  BsdeOptions bsde;
  double t0 = 0.0;
  /// Constant-history initial state; the benchmark profile when absent.
  std::optional<std::vector<double>> x0;
  StencilParams stencil;
  std::string output_dir;
  bool assert_reference = false;

  // Mode-specific settings.
  std::vector<int> levels;             ///< residual refinement N values
  std::vector<int> n_list{4, 16, 64};  ///< mollify
  std::optional<std::vector<double>> direction;  ///< derivative: present part of h
  std::optional<double> t1;            ///< flow; default t0 + floor(N/4) dt
  FlowOptions flow;
  double truncation = 4.0;             ///< control: initial M
  bool write_binary = false;           ///< forward: also write ensemble.bin

  nlohmann::json source;  ///< the parsed document, echoed in the report
};

/// Validates and parses a config document. Throws ConfigInvalid (field and reason) or
/// BenchmarkUnknown.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

struct RunReport {
  nlohmann::json config;
  std::string build_id;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json payload;
  /// 0 on success, 2 when an enabled reference assertion fails.
  int exit_code = 0;
  std::vector<std::string> failed_assertions;

  nlohmann::json to_json() const;
};

std::string build_id();

/// Runs the mode and writes report.json and CSV tables into output_dir (if set).
RunReport run_experiment(const ExperimentConfig& cfg);

/// Initial state of a config: constant history from x0, else the sampled benchmark profile.
LiftedState initial_state(const ExperimentConfig& cfg, const Benchmark& bench);

}  // namespace pathflow
