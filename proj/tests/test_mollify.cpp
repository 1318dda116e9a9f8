#include <cmath>

#include <gtest/gtest.h>

#include "pathflow/error.hpp"
#include "pathflow/mollify.hpp"
#include "test_util.hpp"

namespace pathflow {
namespace {

using testing::constant_state;

TEST(TauEps, ClampsIntoTheInterior) {
  EXPECT_EQ(tau_eps(-0.5, 0.05, 1.0), -0.5);
  EXPECT_EQ(tau_eps(0.0, 0.05, 1.0), -0.05);
  EXPECT_EQ(tau_eps(-1.0, 0.05, 1.0), -0.95);
}

TEST(TauEps, RejectsWideEps) {
  try {
    tau_eps(-0.5, 0.6, 1.0);
    FAIL() << "expected EpsOutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEpsOutOfRange);
  }
}

TEST(Density, UnitMassAndCompactSupport) {
  for (int n : {4, 16, 64}) EXPECT_NEAR(mollifier_mass({n, 64}), 1.0, 1e-10) << n;
  EXPECT_EQ(bump(1.0), 0.0);
  EXPECT_EQ(bump(-1.2), 0.0);
  EXPECT_EQ(mollifier_density(8, 0.2), 0.0);
  EXPECT_GT(mollifier_density(8, 0.1), 0.0);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const GaussLegendre& gl = gauss_legendre(8);
  double s = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) s += gl.weights[i] * std::pow(gl.nodes[i], 14);
  EXPECT_NEAR(s, 2.0 / 15.0, 1e-14);
}

TEST(ApplyJn, PreservesConstants) {
  const PathGrid grid(1.0, 64);
  const LiftedState y = apply_jn(constant_state(grid, 2.5), {8, 64});
  for (int j = 0; j < 64; ++j) EXPECT_NEAR(y.past(j)[0], 2.5, 1e-12);
  EXPECT_EQ(y.present()[0], 2.5);
}

TEST(ApplyJn, ZeroIsFixed) {
  const PathGrid grid(1.0, 32);
  EXPECT_EQ(sup_norm(apply_jn(LiftedState(grid, 2), {4, 64})), 0.0);
}

TEST(ApplyJn, LinearPastConverges) {
  const PathGrid grid(1.0, 256);
  const SmoothProfile p{1, [](double r) { return std::vector<double>{r}; },
                        [](double) { return std::vector<double>{1.0}; }};
  const LiftedState x = sample_profile(p, grid).state;
  auto err = [&](int n) {
    const LiftedState y = apply_jn(x, {n, 64});
    double e = 0.0;
    for (int j = 0; j < grid.n_steps(); ++j) e = std::max(e, std::abs(y.past(j)[0] - x.past(j)[0]));
    return e;
  };
  EXPECT_LE(err(16), err(4));
  EXPECT_LE(err(16), 2.0 / 16);
}

TEST(SmoothingReport, ContinuousProbeDecreases) {
  const PathGrid grid(1.0, 256);
  const SmoothProfile p{1, [](double r) { return std::vector<double>{std::abs(r + 0.4)}; },
                        [](double r) { return std::vector<double>{r + 0.4 >= 0 ? 1.0 : -1.0}; }};
  // |r + 0.4| is Lipschitz; its kink sits between grid points, so sample it directly.
  LiftedState x(grid, 1);
  for (int j = 0; j < 256; ++j) x.past(j)[0] = p.value(grid.past_time(j))[0];
  x.present()[0] = 0.4;
  const auto rows = smoothing_report(x, {4, 16, 64});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LT(rows[1].sup_error, rows[0].sup_error);
  EXPECT_LT(rows[2].sup_error, rows[1].sup_error);
  for (const auto& r : rows) EXPECT_LE(r.boundedness_ratio, 1.05);
}

TEST(SmoothingReport, IndicatorNeverOvershoots) {
  const PathGrid grid(1.0, 128);
  const auto rows = smoothing_report(one_jump_state(grid, -0.5), {4, 16, 64}, 64, 1);
  for (const auto& r : rows) EXPECT_LE(r.boundedness_ratio, 1.0 + 1e-6);
}

TEST(ApproximateCoefficients, PresentOnlyCoefficientsUnchanged) {
  const PathGrid grid(1.0, 64);
  CoefficientSet c;
  c.terminal = [](const LiftedView& x) { return std::exp(x.present()[0]); };
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = -x.present()[0]; };
  const CoefficientSet cn = approximate_coefficients(c, {8, 64}, grid);
  const LiftedState x = sample_profile({1, [](double r) { return std::vector<double>{std::sin(5 * r)}; },
                                        [](double r) { return std::vector<double>{5 * std::cos(5 * r)}; }},
                                       grid)
                            .state;
  EXPECT_EQ(cn.terminal(x), c.terminal(x));
  double a = 0.0, b = 0.0;
  c.drift(0.0, x, std::span<double>(&a, 1));
  cn.drift(0.0, x, std::span<double>(&b, 1));
  EXPECT_EQ(a, b);
}

TEST(ApproximateCoefficients, IntegralOfAJumpConverges) {
  const PathGrid grid(1.0, 256);
  CoefficientSet c;
  c.terminal = [](const LiftedView& x) {
    double s = 0.0;
    for (int j = 0; j < x.grid().n_steps(); ++j) s += x.past(j)[0];
    return s * x.grid().dt();
  };
  // Away from the endpoints the mollifier conserves the integral, so put the jump where clamping bites.
  const LiftedState x = one_jump_state(grid, -0.05);
  std::vector<double> errs;
  for (int n : {4, 16, 64}) errs.push_back(std::abs(approximate_coefficients(c, {n, 64}, grid).terminal(x) - c.terminal(x)));
  EXPECT_LT(errs[1], errs[0]);
  EXPECT_LT(errs[2], errs[1]);
}

TEST(ApproximateCoefficients, DriftLipschitzPreserved) {
  const PathGrid grid(1.0, 64);
  CoefficientSet c;
  c.lipschitz_c = 2.0;
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = 2.0 * std::sin(x.past_at(-0.5)[0]); };
  const CoefficientSet cn = approximate_coefficients(c, {8, 64}, grid);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double f = 1.0 + i, g = 2.0 + 0.5 * i;
    const SmoothProfile pa{1, [f](double r) { return std::vector<double>{std::sin(f * r)}; },
                           [f](double r) { return std::vector<double>{f * std::cos(f * r)}; }};
    const SmoothProfile pb{1, [g](double r) { return std::vector<double>{std::cos(g * r)}; },
                           [g](double r) { return std::vector<double>{-g * std::sin(g * r)}; }};
    const LiftedState xa = sample_profile(pa, grid).state, xb = sample_profile(pb, grid).state;
    double ba = 0.0, bb = 0.0;
    cn.drift(0.0, xa, std::span<double>(&ba, 1));
    cn.drift(0.0, xb, std::span<double>(&bb, 1));
    worst = std::max(worst, std::abs(ba - bb) / sup_norm(xa - xb));
  }
  EXPECT_LE(worst, c.lipschitz_c * (1.0 + 1e-6));
}

}  // namespace
}  // namespace pathflow
