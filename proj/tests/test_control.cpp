#include <cmath>

#include <gtest/gtest.h>

#include "pathflow/benchmarks.hpp"
#include "pathflow/control.hpp"
#include "pathflow/error.hpp"
#include "pathflow/stats.hpp"
#include "test_util.hpp"

namespace pathflow {
namespace {

using testing::constant_state;

double half_square(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v * v;
  return 0.5 * s;
}

ControlProblem numeric_quadratic(int d1) {
  ControlProblem p;
  p.noise_dim = d1;
  p.sigma = Eigen::MatrixXd::Identity(1, d1);
  p.control_cost = half_square;
  return p;
}

TEST(Hamiltonian, QuadraticClosedFormAndNumeric) {
  const std::vector<double> z{0.8, -1.3};
  const HamiltonianValue exact = quadratic_hamiltonian(z);
  EXPECT_DOUBLE_EQ(exact.value, -0.5 * (0.64 + 1.69));
  EXPECT_EQ(exact.argmin, (std::vector<double>{-0.8, 1.3}));
  const HamiltonianValue num = hamiltonian(numeric_quadratic(2), z);
  EXPECT_NEAR(num.value, exact.value, 1e-9);
  EXPECT_NEAR(num.argmin[0], -0.8, 1e-6);
  EXPECT_NEAR(num.argmin[1], 1.3, 1e-6);
}

TEST(Hamiltonian, TruncatedPiecewiseFormula) {
  constexpr double kLambda = 1.5;
  EXPECT_DOUBLE_EQ(truncated_quadratic_neg_hamiltonian(1.0, kLambda), 0.5);
  EXPECT_DOUBLE_EQ(truncated_quadratic_neg_hamiltonian(2.0, kLambda), kLambda * 2.0 - 0.5 * kLambda * kLambda);
  ControlProblem p = numeric_quadratic(1);
  p.control_bound = kLambda;
  for (double z : {0.3, 1.49, 1.51, 4.0}) {
    const std::vector<double> zv{z};
    EXPECT_NEAR(-hamiltonian(p, zv).value, truncated_quadratic_neg_hamiltonian(z, kLambda), 1e-12) << z;
  }
}

TEST(Hamiltonian, AtZeroIsTheMinimumCost) {
  ControlProblem p;
  p.control_cost = [](std::span<const double> u) { return (u[0] - 1.0) * (u[0] - 1.0) + 0.5; };
  const std::vector<double> z{0.0};
  const HamiltonianValue h = hamiltonian(p, z);
  EXPECT_NEAR(h.value, 0.5, 1e-10);
  EXPECT_NEAR(h.argmin[0], 1.0, 1e-5);
}

TEST(Hamiltonian, LinearCostIsNotCoercive) {
  ControlProblem p;
  p.control_cost = [](std::span<const double> u) { return std::abs(u[0]); };
  try {
    coercivity_fit(p);
    FAIL() << "expected NonCoercive";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonCoercive);
  }
}

TEST(Truncation, RegionsAndContinuity) {
  constexpr double kM = 2.0;
  ControlProblem p;
  p.control_cost = half_square;
  p.closed_form = quadratic_hamiltonian;
  const ControlProblem t = truncate_hamiltonian(p, kM);
  const std::vector<double> inside{1.9}, outside{3.2}, zero{0.0};
  EXPECT_EQ(hamiltonian(t, inside).value, hamiltonian(p, inside).value);
  EXPECT_EQ(hamiltonian(t, outside).value, hamiltonian(p, zero).value);
  const std::vector<double> below{kM - 1e-9}, above{kM + 1e-9};
  EXPECT_NEAR(hamiltonian(t, below).value, hamiltonian(t, above).value, 1e-8);
  EXPECT_EQ(cutoff_factor(kM, kM), 1.0);
  EXPECT_EQ(cutoff_factor(kM + 1.0, kM), 0.0);
}

struct Lq {
  const Benchmark& bench = find_benchmark("lq-control");
  PathGrid grid{1.0, 25};
  LiftedState x0 = constant_state(grid, 1.0);
  CoefficientSet fwd = bench.coefficients();
  ControlProblem p = bench.control();
  NoiseSpec mc{17, 10000, 1, grid};
  RegressionBasis basis = present_basis();

  static RegressionBasis present_basis() {
    RegressionBasis b;
    b.features = RegressionBasis::Features::kPresent;
    return b;
  }
};

TEST(SolveHjb, LinearQuadraticValue) {
  Lq lq;
  const HjbResult r = solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 4.0);
  EXPECT_LE(std::abs(r.value.mean - 0.5), 3.0 * r.value.std_error);
  // The policy is the constant -sigma^T q = -1.
  std::vector<double> u(lq.mc.n_paths);
  const ForwardEnsemble ens = simulate_forward(lq.fwd, 0.0, lq.x0, lq.mc);
  for (int k : {0, 10, 20}) {
    for (int i = 0; i < lq.mc.n_paths; ++i) r.policy.control(k, ens.state(i, k), std::span<double>(&u[i], 1));
    EXPECT_NEAR(mean_of(u), -1.0, 0.05);
    EXPECT_LE(std_error_of(u) * std::sqrt(double(u.size())), 0.05);
  }
}

TEST(SolveHjb, ConstantTerminalCost) {
  Lq lq;
  lq.p.terminal_cost = [](const LiftedView&) { return 2.0; };
  const HjbResult r = solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 4.0);
  EXPECT_NEAR(r.value.mean, 2.0, 1e-10);
}

TEST(SolveHjb, SmallTruncationAsksForLarger) {
  Lq lq;
  try {
    solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 0.5);
    FAIL() << "expected ResolveWithLargerM";
  } catch (const ResolveWithLargerM& e) {
    EXPECT_GE(e.observed_max_z(), 0.5);
  }
  const HjbResult r = solve_hjb_adaptive(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 0.5);
  EXPECT_GT(r.truncation, r.max_abs_z);
}

TEST(Cost, ZeroAndOptimalConstantControls) {
  Lq lq;
  const ValueEstimate zero = cost(lq.p, 0.0, lq.x0, constant_control({0.0}), lq.fwd, lq.mc);
  EXPECT_LE(std::abs(zero.mean - 1.0), 3.0 * zero.std_error);
  const ValueEstimate best = cost(lq.p, 0.0, lq.x0, constant_control({-1.0}), lq.fwd, lq.mc);
  EXPECT_LE(std::abs(best.mean - 0.5), 3.0 * best.std_error);
  EXPECT_NEAR(zero.mean - best.mean, 0.5, 1e-12);
}

TEST(Cost, BoundViolationIsReported) {
  Lq lq;
  try {
    cost(lq.p, 0.0, lq.x0, constant_control({5.0}), lq.fwd, lq.mc, 2.0);
    FAIL() << "expected UnboundedControl";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnboundedControl);
  }
}

TEST(ClosedLoop, RealizedCostNearValue) {
  Lq lq;
  const HjbResult r = solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 4.0);
  NoiseSpec fresh = lq.mc;
  fresh.seed = derive_seed(lq.mc.seed, 3);
  const ClosedLoopResult cl = closed_loop(lq.p, 0.0, lq.x0, r.policy, lq.fwd, fresh);
  EXPECT_LE(std::abs(cl.cost.mean - r.value.mean),
            std::max(3.0 * std::hypot(cl.cost.std_error, r.value.std_error), 0.02 * std::abs(r.value.mean)));
  EXPECT_THROW(closed_loop(lq.p, 0.0, lq.x0, r.policy, lq.fwd, lq.mc), Error);
}

TEST(ClosedLoop, DegenerateNoiseRejected) {
  Lq lq;
  const HjbResult r = solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 4.0);
  CoefficientSet quiet = lq.fwd;
  quiet.sigma = Eigen::MatrixXd::Zero(1, 1);
  NoiseSpec fresh = lq.mc;
  fresh.seed = 12345;
  try {
    closed_loop(lq.p, 0.0, lq.x0, r.policy, quiet, fresh);
    FAIL() << "expected DegenerateNoise";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateNoise);
  }
}

TEST(FundamentalRelation, GapSigns) {
  Lq lq;
  const HjbResult r = solve_hjb(lq.p, 0.0, lq.x0, lq.fwd, lq.mc, lq.basis, 4.0);
  const PolicyField& policy = r.policy;
  NoiseSpec fresh = lq.mc;
  fresh.seed = derive_seed(lq.mc.seed, 4);
  const FeedbackFn synthesized = [&policy](int, int k, const LiftedView& x, std::span<double> u) {
    policy.control(k, x, u);
  };
  const AuditResult opt = fundamental_relation_audit(lq.p, 0.0, lq.x0, synthesized, policy, lq.fwd, fresh);
  EXPECT_LE(std::abs(opt.gap.mean), 3.0 * opt.gap.std_error + 1e-10);

  const AuditResult zero = fundamental_relation_audit(lq.p, 0.0, lq.x0, constant_control({0.0}), policy, lq.fwd, fresh);
  // The per-path spread of the gap ignores the error of the fitted z, which the value estimate carries.
  EXPECT_LE(std::abs(zero.gap.mean + 0.5), 3.0 * std::hypot(zero.gap.std_error, r.value.std_error));
  EXPECT_LE(std::abs(zero.identity_defect), 3.0 * zero.identity_std_error);

  for (double u : {-2.5, -0.4, 1.0, 2.0}) {
    const AuditResult a = fundamental_relation_audit(lq.p, 0.0, lq.x0, constant_control({u}), policy, lq.fwd, fresh);
    EXPECT_LE(a.gap.mean, 3.0 * a.gap.std_error) << u;
  }
}

}  // namespace
}  // namespace pathflow
