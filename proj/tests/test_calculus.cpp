#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "pathflow/benchmarks.hpp"
#include "pathflow/calculus.hpp"
#include "pathflow/stats.hpp"
#include "test_util.hpp"

namespace pathflow {
namespace {

using testing::constant_state;

ValueQuery heat_query(std::function<double(const LiftedView&)> phi, double y0, int n_paths, int n_steps = 25,
                      std::uint64_t seed = 1) {
  const PathGrid grid(1.0, n_steps);
  ValueQuery q;
  q.x0 = constant_state(grid, y0);
  q.coeffs.terminal = std::move(phi);
  q.mc = {seed, n_paths, 1, grid};
  return q;
}

double present(const LiftedView& x) { return x.present()[0]; }
double present_sq(const LiftedView& x) { return x.present()[0] * x.present()[0]; }

TEST(Value, MartingaleTerminal) {
  const ValueEstimate v = value(heat_query(present, 0.7, 4000));
  EXPECT_LE(std::abs(v.mean - 0.7), 3.0 * v.std_error + 1e-12);
}

TEST(Value, GaussianSecondMoment) {
  ValueQuery q = heat_query(present_sq, 0.5, 8000, 20);
  q.t0 = 0.25;
  const ValueEstimate v = value(q);
  EXPECT_LE(std::abs(v.mean - (0.25 + 0.75)), 3.0 * v.std_error);
}

TEST(Value, ExponentialDriver) {
  ValueQuery q = heat_query([](const LiftedView&) { return 1.5; }, 0.0, 2000, 50);
  q.coeffs.driver = [](double, const LiftedView&, double y, std::span<const double>) { return -0.5 * y; };
  const ValueEstimate v = value(q);
  // SE vanishes for a constant terminal; the explicit scheme is O(dt) below the ODE value.
  EXPECT_LE(std::abs(v.mean - 1.5 * std::exp(0.5)), std::max(3.0 * v.std_error, 0.01 * 1.5 * std::exp(0.5)));
}

TEST(Value, ByteReproducible) {
  const ValueQuery q = heat_query(present_sq, 0.5, 3000);
  EXPECT_EQ(value(q).mean, value(q).mean);
}

TEST(DirectionalDerivative, ZeroDirectionIsZero) {
  const ValueQuery q = heat_query(present_sq, 0.5, 2000);
  const DerivativeEstimate d = directional_derivative(q, LiftedState(q.x0.grid(), 1));
  EXPECT_EQ(d.mean, 0.0);
}

TEST(DirectionalDerivative, LinearTerminalIsExactForAnyEps) {
  const ValueQuery q = heat_query([](const LiftedView& x) { return 3.0 * x.present()[0]; }, 0.2, 2000);
  const LiftedState h = testing::state_1d(q.x0.grid(), std::vector<double>(25, 5.0), -0.4);
  const double expected = 3.0 * shift(h, 1.0).present()[0];
  EXPECT_NEAR(directional_derivative(q, h, 1e-3).mean, expected, 1e-9);
  EXPECT_NEAR(directional_derivative(q, h, 1e-1).mean, expected, 1e-9);
}

TEST(ZIdentification, LinearTerminal) {
  const ZIdentification z = z_identification_gap(heat_query(present, 0.0, 4000));
  EXPECT_LE(z.gap, 1e-2);
  EXPECT_LE(std::abs(z.z0[0] - 1.0), 3.0 * z.z0_std_error[0]);
  EXPECT_NEAR(z.du_sigma[0], 1.0, 1e-2);
}

TEST(ZIdentification, ConstantTerminal) {
  const ZIdentification z = z_identification_gap(heat_query([](const LiftedView&) { return 2.0; }, 0.0, 4000));
  EXPECT_LE(std::abs(z.z0[0] - z.du_sigma[0]), 3.0 * std::hypot(z.z0_std_error[0], z.du_sigma_std_error[0]) + 1e-12);
}

// Windowed integrals over the delay interval, which the value of the point-delay problem depends on.
RegressionBasis delay_window_basis(double tau, int n_windows) {
  RegressionBasis basis;
  for (int w = 1; w <= n_windows; ++w) {
    const double hi = -tau + tau * w / n_windows;
    basis.extra.push_back({"window" + std::to_string(w), [tau, hi](const LiftedView& x) {
                             const PathGrid& g = x.grid();
                             double s = 0.0;
                             for (int j = 0; j < g.n_steps(); ++j) {
                               const double r = g.past_time(j);
                               if (r >= -tau && r < hi) s += x.past(j)[0];
                             }
                             return s * g.dt();
                           }});
  }
  return basis;
}

TEST(ZIdentification, PointDelayShrinksWithPaths) {
  const Benchmark& b = find_benchmark("point-delay");
  const PathGrid grid(b.horizon, 160);
  std::vector<double> small, large;
  for (std::uint64_t r = 0; r < 3; ++r) {
    for (int n : {2000, 8000}) {
      ValueQuery q;
      q.x0 = constant_state(grid, 1.0);
      q.coeffs = b.coefficients();
      q.mc = {derive_seed(5, r), n, 1, grid};
      q.basis = delay_window_basis(0.5 * b.horizon, 8);
      q.options.martingale_correction = true;
      (n == 2000 ? small : large).push_back(z_identification_gap(q).gap);
    }
  }
  for (double g : small) EXPECT_LE(g, 0.05);
  EXPECT_LT(mean_of(large), mean_of(small));
}

TEST(SecondTrace, LinearTerminalVanishes) {
  const DerivativeEstimate t = second_trace(heat_query(present, 0.3, 4000));
  EXPECT_LE(std::abs(t.mean), 3.0 * t.std_error + 1e-9);
}

TEST(SecondTrace, QuadraticTerminal) {
  const DerivativeEstimate t = second_trace(heat_query(present_sq, 0.3, 4000));
  EXPECT_LE(std::abs(t.mean - 1.0), std::max(3.0 * t.std_error, 0.05));
}

TEST(SecondTrace, FrameInvariance) {
  const PathGrid grid(1.0, 20);
  ValueQuery q;
  q.coeffs.dim = 2;
  q.coeffs.noise_dim = 2;
  q.coeffs.sigma = Eigen::MatrixXd::Identity(2, 2);
  q.coeffs.terminal = [](const LiftedView& x) {
    const auto y = x.present();
    return y[0] * y[0] + y[0] * y[1] + std::cos(y[1]);
  };
  const std::vector<double> y0{0.2, -0.1};
  q.x0 = LiftedState::constant(grid, y0);
  q.mc = {3, 4000, 2, grid};
  auto rotation = [](double a) {
    Eigen::MatrixXd r(2, 2);
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
  };
  const DerivativeEstimate a = second_trace(q, std::nullopt, rotation(0.4));
  const DerivativeEstimate b = second_trace(q, std::nullopt, rotation(2.1));
  EXPECT_LE(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.std_error, b.std_error) + 1e-9);
}

TEST(PdeResidual, LinearTerminal) {
  const Benchmark& b = find_benchmark("heat-present-linear");
  const SmoothProfile prof{1, [](double r) { return std::vector<double>{std::sin(2 * r)}; },
                           [](double r) { return std::vector<double>{2 * std::cos(2 * r)}; }};
  const ResidualReport r = pde_residual(0.0, prof, b.coefficients(), {2, 2000, 1, PathGrid(1.0, 20)}, RegressionBasis{});
  EXPECT_LE(std::abs(r.residual), 3.0 * r.error_budget);
  EXPECT_NEAR(r.du_dt.value, 0.0, 1e-9);
  EXPECT_NEAR(r.du_ax.value, 0.0, 1e-9);
}

TEST(PdeResidual, HeatEquationTerms) {
  const Benchmark& b = find_benchmark("heat-present-square");
  const ResidualReport r = pde_residual(0.0, b.profile, b.coefficients(), {2, 4000, 1, PathGrid(1.0, 20)}, RegressionBasis{});
  EXPECT_LE(std::abs(r.residual), 3.0 * r.error_budget);
  EXPECT_NEAR(r.du_dt.value, -1.0, 3.0 * r.du_dt.std_error + 1e-9);
  EXPECT_NEAR(r.trace_term.value, 1.0, 3.0 * r.trace_term.std_error + 1e-9);
}

TEST(PdeResidual, IntegralTerminalRefines) {
  CoefficientSet c;
  c.terminal = [](const LiftedView& x) {
    double s = 0.0;
    for (int j = 0; j < x.grid().n_steps(); ++j) s += x.past(j)[0];
    return x.present()[0] + s * x.grid().dt();
  };
  const SmoothProfile prof{1, [](double r) { return std::vector<double>{1.0 + 0.5 * std::sin(r)}; },
                           [](double r) { return std::vector<double>{0.5 * std::cos(r)}; }};
  StencilParams st;
  std::vector<double> mags;
  for (int n : {16, 32, 64}) {
    const ResidualReport r = pde_residual(0.0, prof, c, {4, 2000, 1, PathGrid(1.0, n)}, RegressionBasis{}, st);
    EXPECT_LE(std::abs(r.residual), std::max(3.0 * r.error_budget, 0.05 * (1.0 + std::abs(r.u)))) << n;
    mags.push_back(std::abs(r.residual));
    st = {0.5 * r.eps, 0.5 * r.eps2};
  }
  EXPECT_LE(mags[1], mags[0]);
  EXPECT_LE(mags[2], mags[1]);
}

TEST(FlowProperty, EqualTimesGiveZero) {
  const PathGrid grid(1.0, 16);
  CoefficientSet c;
  c.terminal = present_sq;
  const FlowGap g = flow_property_gap(0.25, 0.25, constant_state(grid, 0.1), c, {1, 500, 1, grid}, RegressionBasis{});
  EXPECT_EQ(g.gap, 0.0);
}

TEST(FlowProperty, TowerPropertyWithoutDriver) {
  const PathGrid grid(1.0, 16);
  CoefficientSet c;
  c.terminal = present_sq;
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = -0.5 * x.past_at(-0.5)[0]; };
  const FlowGap g = flow_property_gap(0.0, 0.5, constant_state(grid, 0.4), c, {2, 3000, 1, grid}, RegressionBasis{});
  EXPECT_LE(std::abs(g.gap), 3.0 * g.std_error);
}

TEST(Growth, QuadraticBound) {
  ValueQuery q = heat_query(present_sq, 0.0, 1000, 10);
  q.coeffs.growth_m = 2;
  std::vector<LiftedState> probes;
  for (double y : {-2.0, 0.0, 1.0, 3.0}) probes.push_back(constant_state(q.x0.grid(), y));
  const GrowthFit fit = fit_growth_constant(q, probes, {0.0, 0.5});
  EXPECT_EQ(fit.exponent, 2);
  EXPECT_GT(fit.constant, 0.9);
  EXPECT_LT(fit.constant, 1.2);
}

}  // namespace
}  // namespace pathflow
