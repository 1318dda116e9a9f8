#pragma once

// Seeded Brownian noise, the mild Euler scheme for the lifted forward equation and the
// pathwise first-variation flow.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pathflow/segment.hpp"

namespace pathflow {

/// Counter-based Gaussian stream keyed by (seed, path, step).
struct NoiseSpec {
  std::uint64_t seed = 0;
  int n_paths = 1;
  int noise_dim = 1;
  PathGrid grid{1.0, 2};
};

/// Increment W_{t_{k+1}} - W_{t_k} of path `path` at absolute grid step `step`.
std::vector<double> brownian_increment(const NoiseSpec& noise, int path, int step);
/// Same, written into `out` (noise_dim entries); no bounds check beyond the size.
void fill_brownian_increment(const NoiseSpec& noise, int path, int step, std::span<double> out);
/// Deterministic seed derivation for independent sub-streams (nested MC, fresh evaluation).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// B(t, x) restricted to its present slot, written into out (d entries).
using DriftFn = std::function<void(double t, const LiftedView& x, std::span<double> out)>;
/// DB(t, x)[h], present slot.
using DriftDerivativeFn =
    std::function<void(double t, const LiftedView& x, const LiftedView& h, std::span<double> out)>;
/// b_t(gamma) for a path gamma on [0, t].
using PathDriftFn = std::function<void(double t, const PathView& path, std::span<double> out)>;
using DriverFn =
    std::function<double(double t, const LiftedView& x, double y, std::span<const double> z)>;
using TerminalFn = std::function<double(const LiftedView& x)>;
using TerminalDerivativeFn = std::function<double(const LiftedView& x, const LiftedView& h)>;

struct CoefficientSet {
  int dim = 1;
  int noise_dim = 1;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1);
  DriftFn drift;                         ///< empty means B == 0
  DriftDerivativeFn drift_derivative;    ///< optional; central differences otherwise
  DriverFn driver;                       ///< empty means G == 0
  TerminalFn terminal;
  TerminalDerivativeFn terminal_derivative;  ///< optional analytic DPhi(x)[h]
  int growth_m = 1;
  double lipschitz_c = 1.0;
  /// Declared K with |Z| <= K |Sigma| (bounded DPhi and driver derivatives).
  std::optional<double> derivative_bound;
  std::string description;

  bool has_drift() const { return static_cast<bool>(drift); }
  bool has_driver() const { return static_cast<bool>(driver); }
};

/// B(t, x) = b_t(M_t x).
DriftFn lift_path_drift(PathDriftFn b);

/// Probe-based check of the growth and Lipschitz metadata.
struct CoefficientCheck {
  double max_growth_ratio = 0.0;     ///< max |B| / (1 + |x|) over probes
  double max_driver_lipschitz = 0.0; ///< max |G(y1,z1) - G(y2,z2)| / (|dy| + |dz|)
  bool ok = true;
};
CoefficientCheck spot_check(const CoefficientSet& coeffs, const PathGrid& grid, int n_probes = 64,
                            std::uint64_t seed = 7);

/// Optional open- or closed-loop control u (noise_dim entries) added as Sigma u to the drift.
using FeedbackFn =
    std::function<void(int path, int step, const LiftedView& x, std::span<double> u)>;

/// Monte Carlo ensemble of lifted trajectories started at (t0, x0).
///
/// Each path is stored as one history buffer holding x0's past, x0's present and the
/// simulated presents; state k is the window starting at sample k. Step indices are
/// relative to t0; time(k) = t0 + k dt.
class ForwardEnsemble {
 public:
  ForwardEnsemble(const PathGrid& grid, int dim, int noise_dim, int start_index, int n_paths);

  const PathGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  int noise_dim() const noexcept { return noise_dim_; }
  int n_paths() const noexcept { return n_paths_; }
  /// Number of Euler steps (states run from 0 to n_steps()).
  int n_steps() const noexcept { return n_steps_; }
  int start_index() const noexcept { return start_index_; }
  double time(int k) const noexcept { return grid_.time_at(start_index_ + k); }
  bool controlled() const noexcept { return !controls_.empty(); }

  LiftedView state(int path, int k) const;
  /// M_{t_k} X_k as a view.
  PathView restricted(int path, int k) const;
  std::span<const double> present(int path, int k) const;
  std::span<const double> increment(int path, int k) const;
  std::span<const double> control(int path, int k) const;

  // Writers used by the simulators.
  std::span<double> history(int path);
  std::span<double> increments(int path);
  std::span<double> controls(int path);
  void allocate_controls();

 private:
  std::size_t history_len() const { return static_cast<std::size_t>(grid_.n_steps() + n_steps_ + 1) * dim_; }

  PathGrid grid_;
  int dim_;
  int noise_dim_;
  int start_index_;
  int n_steps_;
  int n_paths_;
  std::vector<double> history_;
  std::vector<double> increments_;
  std::vector<double> controls_;
};

/// Mild Euler scheme X_{k+1} = e^{dt A} X_k + (B(t_k, X_k) dt + sigma dW_k, 0).
ForwardEnsemble simulate_forward(const CoefficientSet& coeffs, double t0, const LiftedView& x0,
                                 const NoiseSpec& noise);
/// Same with drift B + Sigma u_k; the realised controls are stored in the ensemble.
ForwardEnsemble simulate_controlled(const CoefficientSet& coeffs, double t0, const LiftedView& x0,
                                    const NoiseSpec& noise, const FeedbackFn& control);

/// Plain d-dimensional Euler scheme for d xi = b_s(xi_[0,s]) ds + sigma dW starting from
/// the initial path gamma on [0, t0]. Returns per path the presents xi_{t0}, ..., xi_T.
std::vector<std::vector<double>> simulate_unlifted(const PathDriftFn& drift,
                                                   const Eigen::MatrixXd& sigma,
                                                   const PathView& gamma, const NoiseSpec& noise);

/// Pathwise first variation D_x X h along an ensemble, stored like the ensemble itself.
class VariationalFlow {
 public:
  VariationalFlow(const PathGrid& grid, int dim, int n_steps, int n_paths);

  LiftedView direction(int path, int k) const;
  std::span<double> history(int path);
  int n_paths() const noexcept { return n_paths_; }
  int n_steps() const noexcept { return n_steps_; }

 private:
  PathGrid grid_;
  int dim_;
  int n_steps_;
  int n_paths_;
  std::vector<double> history_;
};

/// Xi_{k+1} h = e^{dt A} Xi_k h + (dt DB(t_k, X_k)[Xi_k h], 0), Xi_0 h = h.
VariationalFlow variational_flow(const CoefficientSet& coeffs, const ForwardEnsemble& ensemble,
                                 const LiftedView& h);

/// Directional drift derivative: analytic when provided, else central difference with
/// perturbation size 1e-6 (1 + |x|).
void drift_directional_derivative(const CoefficientSet& coeffs, double t, const LiftedView& x,
                                  const LiftedView& h, std::span<double> out);

/// CSV: path,step,time,x1..xd (present components).
void write_ensemble_csv(std::ostream& os, const ForwardEnsemble& ensemble);
/// Little-endian binary snapshot (see docs/formats.md).
void write_ensemble_binary(std::ostream& os, const ForwardEnsemble& ensemble);
ForwardEnsemble read_ensemble_binary(std::istream& is);

}  // namespace pathflow
