#pragma once

// Backward solver by regression Monte Carlo and the closed-form linear BSDE oracle.

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathflow/forward.hpp"
#include "pathflow/regression.hpp"

namespace pathflow {

enum class BsdeScheme { kExplicit, kPicard };

struct BsdeOptions {
  BsdeScheme scheme = BsdeScheme::kExplicit;
  int picard_iterations = 2;
  /// Regress Y_{k+1} - Z_k dW_k instead of Y_{k+1} for the conditional mean. Same limit,
  /// much smaller variance of differences between nearby starting points.
  bool martingale_correction = false;
};

/// Fitted decoupling field at one step: targets (Y-hat, Z_1..Z_d1).
struct StepFit {
  RegressionModel model;
  RegressionDiagnostics diagnostics;
};

struct BsdeSolution {
  PathGrid grid{1.0, 2};
  int start_index = 0;
  int n_paths = 0;
  int n_steps = 0;
  int noise_dim = 1;
  BsdeScheme scheme = BsdeScheme::kExplicit;
  int picard_iterations = 0;
  bool martingale_correction = false;
  RegressionBasis basis;

  std::vector<double> y_values;       ///< n_paths x (n_steps + 1)
  std::vector<double> z_values;       ///< n_paths x n_steps x noise_dim
  std::vector<double> driver_values;  ///< n_paths x n_steps, the G used at each step
  std::vector<StepFit> fits;          ///< one per step 0..n_steps-1
  /// Per-path terms whose mean is Y at t0: Phi - sum dt G (- sum Z dW when corrected).
  std::vector<double> contributions;

  double y(int path, int k) const { return y_values[static_cast<std::size_t>(path) * (n_steps + 1) + k]; }
  std::span<const double> z(int path, int k) const {
    return std::span<const double>(z_values).subspan(
        (static_cast<std::size_t>(path) * n_steps + k) * noise_dim, noise_dim);
  }
  double driver(int path, int k) const { return driver_values[static_cast<std::size_t>(path) * n_steps + k]; }
  double time(int k) const { return grid.time_at(start_index + k); }

  double y0() const { return y(0, 0); }
  double y0_std_error() const;
  double max_abs_z() const;
  /// Fitted (Y-hat, Z) at step k for an arbitrary state; out has 1 + noise_dim entries.
  void field(int k, const LiftedView& x, std::span<double> out) const;

  nlohmann::json diagnostics_json() const;
};

/// Per-path driver callback used by the backward recursion.
using StepDriver = std::function<double(int path, int k, double y, std::span<const double> z)>;

/// Generic backward regression: Y_N = terminal, Y_k = Y-hat_k - dt g(path, k, Y, Z).
BsdeSolution backward_regression(const ForwardEnsemble& ensemble, std::vector<double> terminal,
                                 const StepDriver& driver, const RegressionBasis& basis,
                                 const BsdeOptions& options = {});

BsdeSolution solve_bsde(const ForwardEnsemble& ensemble, const CoefficientSet& coeffs,
                        const RegressionBasis& basis, const BsdeOptions& options = {});

/// Linear BSDE for (D_x Y h, D_x Z h) along the variational flow of `h`.
BsdeSolution solve_first_derivative_bsde(const ForwardEnsemble& ensemble,
                                         const CoefficientSet& coeffs, const VariationalFlow& flow,
                                         const BsdeSolution& base, const RegressionBasis& basis,
                                         const BsdeOptions& options = {});

/// CSV: path,step,time,Y,Z1..Zd1 (Z empty at the terminal step).
void write_bsde_csv(std::ostream& os, const BsdeSolution& solution);

/// Coefficients of dY = -(a Y + b.Z + c) ds + Z dW, Y_T = eta, as functions of (t, W_t).
struct LinearBsdeSpec {
  double horizon = 1.0;
  int noise_dim = 1;
  std::function<double(double t, std::span<const double> w)> a;
  std::function<void(double t, std::span<const double> w, std::span<double> b)> b;
  std::function<double(double t, std::span<const double> w)> c;
  std::function<double(std::span<const double> w)> eta;
  /// True when a, b, c, eta ignore w; enables the exact mode.
  bool deterministic = false;
  double a_bound = 1e6;
  double b_bound = 1e6;

  static LinearBsdeSpec constant(double a, std::vector<double> b, double c, double eta,
                                 double horizon = 1.0);
};

enum class LinearOracleMode {
  kExact,       ///< deterministic coefficients: Y solves the scalar ODE
  kMonteCarlo,  ///< Y_0 as the mean of Gamma_T eta + sum Gamma_k c_k dt
  kNested,      ///< Y_k by regression on W_k
};

struct LinearBsdeResult {
  int n_paths = 0;
  int n_steps = 0;
  double y0 = 0.0;
  double y0_std_error = 0.0;
  std::vector<double> y_values;  ///< n_paths x (n_steps + 1); empty in kMonteCarlo
  std::vector<double> gamma;     ///< n_paths x (n_steps + 1)
  std::vector<double> weight_v;  ///< n_paths x (n_steps + 1), int_0^t |a| + |b|^2 ds
  std::vector<double> contributions;

  double y(int path, int k) const { return y_values[static_cast<std::size_t>(path) * (n_steps + 1) + k]; }
};

/// Gamma-weighted representation of the linear BSDE on noise.grid from t = 0.
/// Throws UnboundedCoefficient when |a| or |b| exceed the declared bounds.
LinearBsdeResult linear_bsde_closed_form(const LinearBsdeSpec& spec, const NoiseSpec& noise,
                                         LinearOracleMode mode);

/// Driver G = -(a y + b.z + c) for use with solve_bsde.
DriverFn linear_driver(double a, std::vector<double> b, double c);

}  // namespace pathflow
