#pragma once

// Stochastic control on path space: Hamiltonian and its truncations, the HJB solve through
// the backward solver, closed-loop synthesis, cost evaluation and the fundamental relation.

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathflow/bsde.hpp"
#include "pathflow/calculus.hpp"

namespace pathflow {

struct HamiltonianValue {
  double value = 0.0;
  std::vector<double> argmin;
};

using HamiltonianFn = std::function<HamiltonianValue(std::span<const double> z)>;

struct NumericHamiltonian {
  std::optional<double> grid_radius;  ///< overrides the coercivity radius
  int n_grid = 65;                    ///< points per axis
  int refine_iters = 3;
};

struct ControlProblem {
  int dim = 1;
  int noise_dim = 1;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
  std::function<double(double t, const LiftedView& x)> running_cost;  ///< empty means L == 0
  std::function<double(std::span<const double> u)> control_cost;
  TerminalFn terminal_cost;
  HamiltonianFn closed_form;  ///< empty selects the numeric minimiser
  NumericHamiltonian numeric;
  std::optional<double> control_bound;  ///< controls restricted to |u| <= bound
  std::optional<double> truncation;     ///< M of H_M = H(rho_M(.))
  std::string description;
};

/// Q(u) >= a |u|^2 - b on a radial probe set.
struct Coercivity {
  double a = 0.0;
  double b = 0.0;
  double min_q = 0.0;
  /// Search radius 2 (|z| + sqrt(b)) / a for the minimiser.
  double radius(double z_norm) const;
};

/// Throws NonCoercive when Q grows slower than quadratically along a probe ray.
Coercivity coercivity_fit(const ControlProblem& p);

/// H(z) = inf_u Q(u) + z.u with its selected minimiser (truncation applied when set).
HamiltonianValue hamiltonian(const ControlProblem& p, std::span<const double> z);

/// Smooth cutoff factor: 1 on [0, M], 0 on [M + 1, inf), quintic blend in between.
double cutoff_factor(double r, double truncation);
/// rho_M(z) = z cutoff_factor(|z|, M).
std::vector<double> smooth_cutoff(std::span<const double> z, double truncation);

ControlProblem truncate_hamiltonian(const ControlProblem& p, double truncation);

/// Closed form for Q(u) = |u|^2 / 2: H(z) = -|z|^2 / 2, argmin -z.
HamiltonianValue quadratic_hamiltonian(std::span<const double> z);
/// -H^Lambda(|z|) for Q(u) = |u|^2 / 2 restricted to |u| <= Lambda.
double truncated_quadratic_neg_hamiltonian(double z_norm, double lambda);

struct PolicyField {
  ControlProblem problem;
  RegressionBasis basis;
  std::vector<StepFit> fits;
  PathGrid grid{1.0, 2};
  int start_index = 0;
  int dim = 1;
  std::uint64_t training_seed = 0;
  double u_max = std::numeric_limits<double>::infinity();
  ValueEstimate value;
  std::vector<std::vector<double>> hull_lo;  ///< per step, per raw feature
  std::vector<std::vector<double>> hull_hi;

  int n_steps() const { return static_cast<int>(fits.size()); }
  /// Fitted Z at relative step k.
  void z_hat(int k, const LiftedView& x, std::span<double> z) const;
  bool in_hull(int k, const LiftedView& x) const;
  /// gamma_0(z_hat), clamped to |u| <= u_max.
  void control(int k, const LiftedView& x, std::span<double> u) const;
};

struct HjbResult {
  ValueEstimate value;
  PolicyField policy;
  double max_abs_z = 0.0;
  double truncation = 0.0;
  nlohmann::json diagnostics;
};

/// Solves the HJB equation as the BSDE with driver -(L + H_M(z)) along the uncontrolled
/// forward flow. Throws ResolveWithLargerM when max|Z| >= M.
HjbResult solve_hjb(const ControlProblem& p, double t0, const LiftedView& x0,
                    const CoefficientSet& forward, const NoiseSpec& mc, const RegressionBasis& basis,
                    double truncation, const BsdeOptions& options = {});
/// Doubles M from `initial_truncation` until the solve succeeds.
HjbResult solve_hjb_adaptive(const ControlProblem& p, double t0, const LiftedView& x0,
                             const CoefficientSet& forward, const NoiseSpec& mc,
                             const RegressionBasis& basis, double initial_truncation,
                             int max_doublings = 8, const BsdeOptions& options = {});

FeedbackFn constant_control(std::vector<double> u);

struct CostRun {
  ValueEstimate estimate;
  std::vector<double> contributions;
};

/// E[sum dt (L + Q(u)) + Upsilon(X_T)] along the controlled flow. Throws UnboundedControl
/// for non-finite controls or |u| above `control_bound`.
CostRun cost_run(const ControlProblem& p, double t0, const LiftedView& x0, const FeedbackFn& control,
                 const CoefficientSet& forward, const NoiseSpec& mc,
                 double control_bound = std::numeric_limits<double>::infinity());
ValueEstimate cost(const ControlProblem& p, double t0, const LiftedView& x0, const FeedbackFn& control,
                   const CoefficientSet& forward, const NoiseSpec& mc,
                   double control_bound = std::numeric_limits<double>::infinity());

struct ClosedLoopResult {
  ForwardEnsemble ensemble;
  ValueEstimate cost;
  double extrapolation_fraction = 0.0;
};

/// Simulates the feedback u = gamma_0(z_hat) on a fresh noise stream.
ClosedLoopResult closed_loop(const ControlProblem& p, double t0, const LiftedView& x0,
                             const PolicyField& policy, const CoefficientSet& forward,
                             const NoiseSpec& mc_fresh);

struct AuditResult {
  ValueEstimate gap;    ///< E sum dt [H(z_hat) - z_hat.u - Q(u)]
  ValueEstimate cost;   ///< J(u) on the same paths
  double v = 0.0;
  double identity_defect = 0.0;  ///< v - J - gap
  double identity_std_error = 0.0;
};

AuditResult fundamental_relation_audit(const ControlProblem& p, double t0, const LiftedView& x0,
                                       const FeedbackFn& control, const PolicyField& policy,
                                       const CoefficientSet& forward, const NoiseSpec& mc);

}  // namespace pathflow
