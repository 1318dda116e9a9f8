#pragma once

// The value function u(t, x) = Y_t^{t,x}, its finite-difference derivatives under common
// random numbers, the Z = Du Sigma identification, the Markov flow property and the
// Kolmogorov residual.

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "pathflow/bsde.hpp"

namespace pathflow {

struct ValueQuery {
  double t0 = 0.0;
  LiftedState x0{PathGrid(1.0, 2), 1};
  CoefficientSet coeffs;
  NoiseSpec mc;
  RegressionBasis basis;
  BsdeOptions options;
};

struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int n_paths = 0;
};

nlohmann::json to_json(const ValueEstimate& v);

/// One value evaluation with its per-path contributions, so that stencils built from
/// several runs under the same noise get a standard error from the combined terms.
struct ValueRun {
  double mean = 0.0;
  std::vector<double> contributions;

  ValueEstimate estimate() const;
};

/// u(t0, x0) with the noise, basis and options of q.
ValueRun value_run(const ValueQuery& q, double t0, const LiftedView& x0);
ValueEstimate value(const ValueQuery& q);

/// sum_i w_i run_i, with the standard error of the path-wise combination.
ValueEstimate combine(const std::vector<std::pair<double, const ValueRun*>>& terms);
std::vector<double> combine_contributions(const std::vector<std::pair<double, const ValueRun*>>& terms);

/// Default stencil steps: 1e-3 (1 + |x0|) and 5e-2 (1 + |x0|).
double default_eps(const LiftedView& x0);
double default_eps2(const LiftedView& x0);

struct DerivativeEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double eps = 0.0;
  std::vector<double> contributions;
};

/// (u(x0 + eps h) - u(x0 - eps h)) / (2 eps) under common random numbers.
DerivativeEstimate directional_derivative(const ValueQuery& q, const LiftedView& h,
                                          std::optional<double> eps = std::nullopt);

struct IdentificationPoint {
  double time = 0.0;
  double gap = 0.0;
};

struct ZIdentification {
  std::vector<double> z0;
  std::vector<double> z0_std_error;
  std::vector<double> du_sigma;
  std::vector<double> du_sigma_std_error;
  double gap = 0.0;  ///< |Z0 - Du Sigma| / (1 + |Z0|)
  /// Interior times: mean relative gap between the fitted Z and the Sigma-directional
  /// derivative of the fitted Y field.
  std::vector<IdentificationPoint> interior;
};

ZIdentification z_identification_gap(const ValueQuery& q, std::optional<double> eps = std::nullopt);

/// 1/2 sum_j [u(x + e h_j) - 2u(x) + u(x - e h_j)] / e^2 with h_j = (sigma R e_j, 0).
/// `frame` is an orthonormal d1 x d1 matrix (identity by default).
DerivativeEstimate second_trace(const ValueQuery& q, std::optional<double> eps2 = std::nullopt,
                                const std::optional<Eigen::MatrixXd>& frame = std::nullopt);

struct StencilParams {
  std::optional<double> eps;
  std::optional<double> eps2;
};

struct ResidualTerm {
  double value = 0.0;
  double std_error = 0.0;
};

struct ResidualReport {
  ResidualTerm du_dt, du_ax, du_b, trace_term, g_term;
  double u = 0.0;
  double residual = 0.0;
  /// Standard error of the path-wise residual combined with a floating-point floor.
  double error_budget = 0.0;
  double eps = 0.0;
  double eps2 = 0.0;
  double t0 = 0.0;
  int n_steps = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  int n_paths = 0;
};

nlohmann::json to_json(const ResidualReport& r);

/// Signed residual du/dt + Du[Ax] + Du[B] + 1/2 tr[Sigma Sigma* D^2 u] - G at (t0, profile).
ResidualReport pde_residual(double t0, const SmoothProfile& profile, const CoefficientSet& coeffs,
                            const NoiseSpec& mc, const RegressionBasis& basis,
                            const StencilParams& stencil = {}, const BsdeOptions& options = {});

enum class FlowMode { kDecouplingField, kNested };

struct FlowOptions {
  FlowMode mode = FlowMode::kDecouplingField;
  int n_inner = 256;
};

struct FlowGap {
  double u0 = 0.0;
  double expected = 0.0;  ///< E[u(t1, X_t1) - int_t0^t1 G]
  double gap = 0.0;       ///< u0 - expected
  double std_error = 0.0;
};

FlowGap flow_property_gap(double t0, double t1, const LiftedView& x0, const CoefficientSet& coeffs,
                          const NoiseSpec& mc, const RegressionBasis& basis,
                          const FlowOptions& flow = {}, const BsdeOptions& options = {});

struct GrowthFit {
  double constant = 0.0;  ///< max |u| / (1 + |x|^m) over the probes
  int exponent = 1;
};

/// Probe-grid fit of |u(t, x)| <= c (1 + |x|^m).
GrowthFit fit_growth_constant(const ValueQuery& base, const std::vector<LiftedState>& probes,
                              const std::vector<double>& times);

}  // namespace pathflow
