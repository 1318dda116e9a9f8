#include "pathflow/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>

#include "pathflow/error.hpp"

namespace pathflow {
namespace {

GaussLegendre compute_gauss_legendre(int points) {
  GaussLegendre gl;
  gl.nodes.resize(points);
  gl.weights.resize(points);
  for (int i = 0; i < (points + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    gl.nodes[i] = -x;
    gl.nodes[points - 1 - i] = x;
    gl.weights[i] = w;
    gl.weights[points - 1 - i] = w;
  }
  return gl;
}

template <typename F>
double integrate(F&& f, double a, double b, int points) {
  const GaussLegendre& gl = gauss_legendre(points);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double s = 0.0;
  for (int i = 0; i < points; ++i) s += gl.weights[i] * f(mid + half * gl.nodes[i]);
  return s * half;
}

void check_bandwidth(int n, double horizon) {
  require(n > 0, ErrorKind::kInvalidArgument, "mollifier index n must be positive");
  if (!(1.0 / n < 0.5 * horizon)) {
    fail(ErrorKind::kBandwidthTooWide, "1/n = " + std::to_string(1.0 / n) + " is not below T/2");
  }
}

}  // namespace

const GaussLegendre& gauss_legendre(int points) {
  require(points >= 1, ErrorKind::kInvalidArgument, "need at least one quadrature point");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussLegendre>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[points];
  if (!slot) slot = std::make_unique<GaussLegendre>(compute_gauss_legendre(points));
  return *slot;
}

double bump(double x) { return std::abs(x) < 1.0 ? std::exp(-1.0 / (1.0 - x * x)) : 0.0; }

double bump_normalization() {
  static const double value = [] {
    constexpr int kPanels = 256;
    double s = 0.0;
    for (int k = 0; k < kPanels; ++k) {
      const double a = -1.0 + 2.0 * k / kPanels;
      s += integrate(bump, a, a + 2.0 / kPanels, 32);
    }
    return s;
  }();
  return value;
}

double mollifier_density(int n, double x) { return n * bump(n * x) / bump_normalization(); }

double mollifier_mass(const MollifierConfig& cfg) {
  const double h = 1.0 / cfg.n;
  return integrate([&](double x) { return mollifier_density(cfg.n, x); }, -h, h,
                   cfg.quadrature_points);
}

double tau_eps(double r, double eps, double horizon) {
  if (!(eps > 0.0 && eps < 0.5 * horizon)) {
    fail(ErrorKind::kEpsOutOfRange, "eps must lie in (0, T/2)");
  }
  return std::clamp(r, -horizon + eps, -eps);
}

Mollifier::Mollifier(const PathGrid& grid, const MollifierConfig& cfg) : grid_(grid), cfg_(cfg) {
  check_bandwidth(cfg.n, grid.horizon());
  const int N = grid.n_steps();
  const double dt = grid.dt();
  const double h = 1.0 / cfg.n;
  rows_.resize(N);
  for (int j = 0; j < N; ++j) {
    const double c = tau_eps(grid.past_time(j) + 0.5 * dt, h, grid.horizon());
    const double lo = c - h, hi = c + h;
    const int first = std::clamp(static_cast<int>(std::floor((lo - grid.past_time(0)) / dt)), 0, N - 1);
    const int last = std::clamp(static_cast<int>(std::floor((hi - grid.past_time(0)) / dt)), 0, N - 1);
    Row& row = rows_[j];
    row.first = first;
    double total = 0.0;
    for (int i = first; i <= last; ++i) {
      const double a = std::max(lo, grid.past_time(i));
      const double b = std::min(hi, grid.past_time(i) + dt);
      double w = 0.0;
      if (b > a) {
        w = integrate([&](double y) { return mollifier_density(cfg.n, c - y); }, a, b,
                      cfg.quadrature_points);
      }
      row.weights.push_back(w);
      total += w;
    }
    for (double& w : row.weights) w /= total;
  }
}

double Mollifier::past_value(const LiftedView& x, int j, int i) const {
  const Row& row = rows_[j];
  double s = 0.0;
  for (std::size_t m = 0; m < row.weights.size(); ++m) {
    s += row.weights[m] * x.past(row.first + static_cast<int>(m))[i];
  }
  return s;
}

LiftedState Mollifier::apply(const LiftedView& x) const {
  require(x.grid() == grid_, ErrorKind::kGridMismatch, "state grid differs from the mollifier grid");
  LiftedState out(grid_, x.dim());
  const int d = x.dim();
  std::copy(x.present().begin(), x.present().end(), out.present().begin());
  for (int j = 0; j < grid_.n_steps(); ++j) {
    auto dst = out.past(j);
    const Row& row = rows_[j];
    for (std::size_t m = 0; m < row.weights.size(); ++m) {
      auto src = x.past(row.first + static_cast<int>(m));
      for (int i = 0; i < d; ++i) dst[i] += row.weights[m] * src[i];
    }
  }
  return out;
}

LiftedState apply_jn(const LiftedView& x, const MollifierConfig& cfg) {
  return Mollifier(x.grid(), cfg).apply(x);
}

LiftedState one_jump_state(const PathGrid& grid, double a) {
  LiftedState x(grid, 1);
  x.present()[0] = 1.0;
  for (int j = 0; j < grid.n_steps(); ++j) x.past(j)[0] = grid.past_time(j) >= a ? 1.0 : 0.0;
  return x;
}

std::vector<SmoothingRow> smoothing_report(const LiftedView& x, const std::vector<int>& n_list,
                                           int quadrature_points, int n_jumps) {
  require(std::is_sorted(n_list.begin(), n_list.end()), ErrorKind::kInvalidArgument,
          "n_list must be increasing");
  const PathGrid& grid = x.grid();
  std::vector<LiftedState> probes;
  probes.emplace_back(x);
  for (int m = 1; m <= n_jumps; ++m) {
    const double a = -grid.horizon() * m / (n_jumps + 1);
    if (x.dim() == 1) {
      probes.push_back(one_jump_state(grid, a));
    } else {
      LiftedState p(grid, x.dim());
      for (int i = 0; i < x.dim(); ++i) p.present()[i] = 1.0;
      for (int j = 0; j < grid.n_steps(); ++j) {
        for (int i = 0; i < x.dim(); ++i) p.past(j)[i] = grid.past_time(j) >= a ? 1.0 : 0.0;
      }
      probes.push_back(std::move(p));
    }
  }
  std::vector<SmoothingRow> rows;
  for (int n : n_list) {
    const Mollifier mol(grid, {n, quadrature_points});
    SmoothingRow row;
    row.n = n;
    const LiftedState jx = mol.apply(x);
    row.sup_error = sup_norm(jx - x);
    for (const auto& p : probes) {
      const double base = sup_norm(p);
      if (base > 0.0) row.boundedness_ratio = std::max(row.boundedness_ratio, sup_norm(mol.apply(p)) / base);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_smoothing_csv(std::ostream& os, const std::vector<SmoothingRow>& rows) {
  const auto old = os.precision(17);
  os << "n,sup_error,boundedness_ratio\n";
  for (const auto& r : rows) os << r.n << ',' << r.sup_error << ',' << r.boundedness_ratio << '\n';
  os.precision(old);
}

CoefficientSet approximate_coefficients(const CoefficientSet& coeffs, const MollifierConfig& cfg,
                                        const PathGrid& grid) {
  return approximate_coefficients(coeffs, cfg, cfg, cfg, grid);
}

CoefficientSet approximate_coefficients(const CoefficientSet& coeffs, const MollifierConfig& drift_cfg,
                                        const MollifierConfig& driver_cfg,
                                        const MollifierConfig& terminal_cfg, const PathGrid& grid) {
  CoefficientSet out = coeffs;
  const auto drift_mol = std::make_shared<const Mollifier>(grid, drift_cfg);
  const auto driver_mol = std::make_shared<const Mollifier>(grid, driver_cfg);
  const auto terminal_mol = std::make_shared<const Mollifier>(grid, terminal_cfg);
  if (coeffs.drift) {
    out.drift = [f = coeffs.drift, drift_mol](double t, const LiftedView& x, std::span<double> o) {
      f(t, drift_mol->apply(x), o);
    };
  }
  if (coeffs.drift_derivative) {
    out.drift_derivative = [f = coeffs.drift_derivative, drift_mol](
                               double t, const LiftedView& x, const LiftedView& h, std::span<double> o) {
      f(t, drift_mol->apply(x), drift_mol->apply(h), o);
    };
  }
  if (coeffs.driver) {
    out.driver = [f = coeffs.driver, driver_mol](double t, const LiftedView& x, double y,
                                                 std::span<const double> z) {
      return f(t, driver_mol->apply(x), y, z);
    };
  }
  if (coeffs.terminal) {
    out.terminal = [f = coeffs.terminal, terminal_mol](const LiftedView& x) {
      return f(terminal_mol->apply(x));
    };
  }
  if (coeffs.terminal_derivative) {
    out.terminal_derivative = [f = coeffs.terminal_derivative, terminal_mol](const LiftedView& x,
                                                                             const LiftedView& h) {
      return f(terminal_mol->apply(x), terminal_mol->apply(h));
    };
  }
  out.description = coeffs.description + " (mollified, n = " + std::to_string(terminal_cfg.n) + ")";
  return out;
}

}  // namespace pathflow
