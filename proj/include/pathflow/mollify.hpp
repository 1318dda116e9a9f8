#pragma once

// Boundary-shifted mollification J^n of the past segment and its diagnostics.

#include <iosfwd>
#include <vector>

#include "pathflow/forward.hpp"

namespace pathflow {

struct MollifierConfig {
  int n = 16;                   ///< bandwidth 1/n
  int quadrature_points = 64;   ///< Gauss-Legendre points per integration interval
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussLegendre& gauss_legendre(int points);

/// Unnormalised bump exp(-1 / (1 - x^2)) on (-1, 1), zero outside.
double bump(double x);
/// Integral of the bump over (-1, 1), computed once by composite quadrature.
double bump_normalization();
/// rho_n(x) = n rho(n x) with rho the normalised bump.
double mollifier_density(int n, double x);
/// Quadrature mass of rho_n over its support with cfg.quadrature_points nodes.
double mollifier_mass(const MollifierConfig& cfg);

/// Clamp of r in [-T, 0] into [-T + eps, -eps]. Throws EpsOutOfRange unless 0 < eps < T/2.
double tau_eps(double r, double eps, double horizon);

/// Precomputed banded weights w_{j,i} = int_{cell i} rho_n(tau(m_j) - y) dy at the cell midpoints
/// m_j = r_j + dt / 2, rows summing to 1.
class Mollifier {
 public:
  Mollifier(const PathGrid& grid, const MollifierConfig& cfg);

  const PathGrid& grid() const noexcept { return grid_; }
  const MollifierConfig& config() const noexcept { return cfg_; }

  LiftedState apply(const LiftedView& x) const;
  /// Coordinate `i` of (J^n phi)(r_j).
  double past_value(const LiftedView& x, int j, int i) const;

 private:
  struct Row {
    int first = 0;
    std::vector<double> weights;
  };
  PathGrid grid_;
  MollifierConfig cfg_;
  std::vector<Row> rows_;
};

/// J^n x = (present, smoothed past).
LiftedState apply_jn(const LiftedView& x, const MollifierConfig& cfg);

struct SmoothingRow {
  int n = 0;
  double sup_error = 0.0;           ///< |J^n x - x|_inf on the grid
  double boundedness_ratio = 0.0;   ///< max |J^n p|_inf / |p|_inf over x and one-jump probes
};

/// Per n: sup error for x and the boundedness proxy over x and the one-jump paths
/// (1, 1_[a,0)) at `n_jumps` evenly spaced a.
std::vector<SmoothingRow> smoothing_report(const LiftedView& x, const std::vector<int>& n_list,
                                           int quadrature_points = 64, int n_jumps = 5);
void write_smoothing_csv(std::ostream& os, const std::vector<SmoothingRow>& rows);

/// One-jump state (1, 1_[a,0)) in dimension 1.
LiftedState one_jump_state(const PathGrid& grid, double a);

/// B^n = B(J^n .), G^n = G(J^n .), Phi^n = Phi(J^n .); metadata unchanged.
CoefficientSet approximate_coefficients(const CoefficientSet& coeffs, const MollifierConfig& cfg,
                                        const PathGrid& grid);
/// Same with separate smoothing sequences for the drift, driver and terminal condition.
CoefficientSet approximate_coefficients(const CoefficientSet& coeffs, const MollifierConfig& drift_cfg,
                                        const MollifierConfig& driver_cfg,
                                        const MollifierConfig& terminal_cfg, const PathGrid& grid);

}  // namespace pathflow
