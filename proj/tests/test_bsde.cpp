#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "pathflow/bsde.hpp"
#include "pathflow/calculus.hpp"
#include "pathflow/error.hpp"
#include "pathflow/regression.hpp"
#include "test_util.hpp"

namespace pathflow {
namespace {

using testing::constant_state;

double normal(int i, int j = 0) { return brownian_increment({99, i + 1, 1, PathGrid(1.0, j + 2)}, i, j)[0] * std::sqrt(j + 2.0); }

TEST(Regress, RecoversAnExactLinearMap) {
  Eigen::MatrixXd raw(200, 1), y(200, 1);
  for (int i = 0; i < 200; ++i) {
    raw(i, 0) = normal(i);
    y(i, 0) = 2.0 - 3.0 * raw(i, 0);
  }
  const RegressionResult r = regress(raw, y, 1, 0.0);
  EXPECT_LE((r.fitted - y).cwiseAbs().maxCoeff(), 1e-10);
  const std::vector<double> probe{0.7};
  EXPECT_NEAR(r.model.predict_one(probe), 2.0 - 2.1, 1e-10);
}

TEST(Regress, ConstantTargets) {
  Eigen::MatrixXd raw(100, 2), y = Eigen::MatrixXd::Constant(100, 1, 4.5);
  for (int i = 0; i < 100; ++i) {
    raw(i, 0) = normal(i);
    raw(i, 1) = normal(i, 1);
  }
  const RegressionResult r = regress(raw, y, 2, 1e-8);
  EXPECT_LE((r.fitted.array() - 4.5).abs().maxCoeff(), 1e-10);
}

TEST(Regress, NoisyQuadraticWithinOlsBand) {
  constexpr int kSamples = 10000;
  auto f = [](double x) { return 1.0 + x - 0.5 * x * x; };
  Eigen::MatrixXd raw(kSamples, 1), y(kSamples, 1);
  for (int i = 0; i < kSamples; ++i) {
    raw(i, 0) = normal(i);
    y(i, 0) = f(raw(i, 0)) + 0.1 * normal(i, 1);
  }
  const RegressionResult r = regress(raw, y, 2, 0.0);
  const double band = 3.0 * 0.1 / std::sqrt(kSamples / 1.0);
  for (double x : {-1.0, -0.3, 0.0, 0.4, 1.0}) {
    const std::vector<double> probe{x};
    EXPECT_NEAR(r.model.predict_one(probe), f(x), band) << x;
  }
}

TEST(Regress, TooFewSamples) {
  Eigen::MatrixXd raw(10, 3), y(10, 1);
  raw.setRandom();
  y.setRandom();
  try {
    regress(raw, y, 2, 1e-8);
    FAIL() << "expected InsufficientSamples";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInsufficientSamples);
  }
}

TEST(Monomials, Count) {
  EXPECT_EQ(monomial_count(1, 2), 3);
  EXPECT_EQ(monomial_count(3, 2), 10);
  EXPECT_EQ(static_cast<int>(monomial_exponents(4, 3).size()), monomial_count(4, 3));
}

CoefficientSet heat(std::function<double(const LiftedView&)> phi) {
  CoefficientSet c;
  c.terminal = std::move(phi);
  return c;
}

TEST(SolveBsde, ConstantTerminalIsAConstantMartingale) {
  const PathGrid grid(1.0, 20);
  const CoefficientSet c = heat([](const LiftedView&) { return 3.0; });
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {1, 2000, 1, grid});
  const BsdeSolution s = solve_bsde(ens, c, RegressionBasis{});
  for (int p = 0; p < 2000; p += 111) {
    for (int k = 0; k <= 20; ++k) EXPECT_NEAR(s.y(p, k), 3.0, 1e-10);
  }
  EXPECT_LE(s.max_abs_z(), 1e-10);
}

TEST(SolveBsde, ExponentialDriverMatchesTheBackwardOde) {
  const PathGrid grid(1.0, 50);
  CoefficientSet c = heat([](const LiftedView&) { return 2.0; });
  constexpr double kRate = 0.4;
  c.driver = [](double, const LiftedView&, double y, std::span<const double>) { return -kRate * y; };
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {2, 2000, 1, grid});
  const BsdeSolution s = solve_bsde(ens, c, RegressionBasis{});
  // Explicit scheme: Y_k = Y_{k+1} (1 + r dt) exactly, within O(dt) of the ODE.
  EXPECT_NEAR(s.y0(), 2.0 * std::pow(1.0 + kRate * grid.dt(), 50), 1e-12);
  EXPECT_NEAR(s.y0(), 2.0 * std::exp(kRate), 2.0 * kRate * kRate * grid.dt());
}

TEST(SolveBsde, LinearTerminalRecoversBrownianMotion) {
  constexpr int kPaths = 100000;
  const PathGrid grid(1.0, 8);
  const CoefficientSet c = heat([](const LiftedView& x) { return x.present()[0]; });
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {3, kPaths, 1, grid});
  RegressionBasis basis;
  basis.features = RegressionBasis::Features::kPresent;
  BsdeOptions o;
  o.martingale_correction = true;
  const BsdeSolution s = solve_bsde(ens, c, basis, o);
  for (int k = 0; k < 8; ++k) {
    double z_mean = 0.0;
    for (int p = 0; p < kPaths; ++p) z_mean += s.z(p, k)[0];
    EXPECT_NEAR(z_mean / kPaths, 1.0, 1e-2) << k;
    for (int p = 0; p < kPaths; p += 4999) EXPECT_NEAR(s.y(p, k), ens.present(p, k)[0], 1e-2);
  }
}

TEST(SolveBsde, PicardAgreesWithExplicit) {
  const PathGrid grid(1.0, 25);
  CoefficientSet c = heat([](const LiftedView& x) { return std::cos(x.present()[0]); });
  c.driver = [](double, const LiftedView&, double y, std::span<const double> z) { return -0.3 * y + 0.1 * z[0]; };
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {4, 4000, 1, grid});
  const BsdeSolution a = solve_bsde(ens, c, RegressionBasis{});
  BsdeOptions o;
  o.scheme = BsdeScheme::kPicard;
  o.picard_iterations = 3;
  const BsdeSolution b = solve_bsde(ens, c, RegressionBasis{}, o);
  EXPECT_NEAR(a.y0(), b.y0(), 5.0 * grid.dt());
}

TEST(LinearOracle, ZeroCoefficientsGiveTheTerminal) {
  const LinearBsdeSpec spec = LinearBsdeSpec::constant(0.0, {0.0}, 0.0, 1.7);
  const LinearBsdeResult r = linear_bsde_closed_form(spec, {1, 10, 1, PathGrid(1.0, 10)}, LinearOracleMode::kExact);
  for (int k = 0; k <= 10; ++k) EXPECT_DOUBLE_EQ(r.y(3, k), 1.7);
}

TEST(LinearOracle, ScalarOde) {
  constexpr double kAlpha = 0.6;
  const PathGrid grid(1.0, 10);
  const LinearBsdeSpec spec = LinearBsdeSpec::constant(kAlpha, {0.0}, 0.0, 1.0);
  const LinearBsdeResult r = linear_bsde_closed_form(spec, {1, 4, 1, grid}, LinearOracleMode::kExact);
  for (int k = 0; k <= 10; ++k) EXPECT_NEAR(r.y(0, k), std::exp(kAlpha * (1.0 - grid.time_at(k))), 1e-12);
}

TEST(LinearOracle, CrossSolverAgreement) {
  const PathGrid grid(1.0, 50);
  CoefficientSet c = heat([](const LiftedView&) { return 1.0; });
  c.driver = linear_driver(0.3, {0.2}, 0.1);
  const NoiseSpec noise{5, 5000, 1, grid};
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), noise);
  const BsdeSolution s = solve_bsde(ens, c, RegressionBasis{});
  NoiseSpec other = noise;
  other.seed = derive_seed(noise.seed, 1);
  const LinearBsdeResult r =
      linear_bsde_closed_form(LinearBsdeSpec::constant(0.3, {0.2}, 0.1, 1.0), other, LinearOracleMode::kMonteCarlo);
  EXPECT_LE(std::abs(s.y0() - r.y0), 3.0 * std::hypot(s.y0_std_error(), r.y0_std_error));
}

TEST(LinearOracle, DeclaredBoundsEnforced) {
  LinearBsdeSpec spec = LinearBsdeSpec::constant(2.0, {0.0}, 0.0, 1.0);
  spec.a_bound = 1.0;
  try {
    linear_bsde_closed_form(spec, {1, 4, 1, PathGrid(1.0, 4)}, LinearOracleMode::kMonteCarlo);
    FAIL() << "expected UnboundedCoefficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnboundedCoefficient);
  }
}

TEST(FirstDerivativeBsde, LinearTerminalUnderTransport) {
  const PathGrid grid(1.0, 16);
  CoefficientSet c = heat([](const LiftedView& x) { return 2.5 * x.present()[0]; });
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.3), {6, 1000, 1, grid});
  const BsdeSolution base = solve_bsde(ens, c, RegressionBasis{});
  const LiftedState h = testing::state_1d(grid, std::vector<double>(16, -1.0), 0.8);
  const BsdeSolution d = solve_first_derivative_bsde(ens, c, variational_flow(c, ens, h), base, RegressionBasis{});
  const double expected = 2.5 * shift(h, 1.0).present()[0];
  for (int p = 0; p < 1000; p += 97) {
    for (int k = 0; k <= 16; ++k) EXPECT_NEAR(d.y(p, k), expected, 1e-10);
  }
}

TEST(FirstDerivativeBsde, ZeroDirection) {
  const PathGrid grid(1.0, 16);
  CoefficientSet c = heat([](const LiftedView& x) { return x.present()[0] * x.present()[0]; });
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.3), {6, 1000, 1, grid});
  const BsdeSolution base = solve_bsde(ens, c, RegressionBasis{});
  const LiftedState h(grid, 1);
  const BsdeSolution d = solve_first_derivative_bsde(ens, c, variational_flow(c, ens, h), base, RegressionBasis{});
  for (int p = 0; p < 1000; p += 97) EXPECT_EQ(d.y(p, 0), 0.0);
}

TEST(FirstDerivativeBsde, MatchesCentralDifferences) {
  const PathGrid grid(1.0, 20);
  CoefficientSet c = heat([](const LiftedView& x) { return std::sin(x.present()[0]) + x.past_at(-0.5)[0]; });
  c.driver = [](double, const LiftedView&, double y, std::span<const double>) { return -0.2 * y; };
  const LiftedState x0 = constant_state(grid, 0.4);
  const NoiseSpec noise{8, 4000, 1, grid};
  const ForwardEnsemble ens = simulate_forward(c, 0.0, x0, noise);
  const BsdeSolution base = solve_bsde(ens, c, RegressionBasis{});
  const LiftedState h = constant_state(grid, 1.0);
  const BsdeSolution d = solve_first_derivative_bsde(ens, c, variational_flow(c, ens, h), base, RegressionBasis{});
  ValueQuery q;
  q.x0 = x0;
  q.coeffs = c;
  q.mc = noise;
  const DerivativeEstimate fd = directional_derivative(q, h);
  EXPECT_LE(std::abs(d.y0() - fd.mean), std::max(3.0 * fd.std_error, 1e-2));
}

TEST(BsdeIo, CsvHeader) {
  const PathGrid grid(1.0, 4);
  const CoefficientSet c = heat([](const LiftedView&) { return 1.0; });
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {1, 100, 1, grid});
  std::ostringstream os;
  write_bsde_csv(os, solve_bsde(ens, c, RegressionBasis{}));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "path,step,time,Y,Z1");
}

}  // namespace
}  // namespace pathflow
