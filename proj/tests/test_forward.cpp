#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "pathflow/forward.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/stats.hpp"
#include "test_util.hpp"

namespace pathflow {
namespace {

using testing::constant_state;

TEST(Brownian, Deterministic) {
  const NoiseSpec n{42, 10, 3, PathGrid(1.0, 20)};
  EXPECT_EQ(brownian_increment(n, 4, 7), brownian_increment(n, 4, 7));
  EXPECT_NE(brownian_increment(n, 4, 7), brownian_increment(n, 4, 8));
  EXPECT_NE(brownian_increment(n, 4, 7), brownian_increment(n, 5, 7));
}

TEST(Brownian, MeanAndVariance) {
  constexpr int kDraws = 100000;
  const NoiseSpec n{3, kDraws, 2, PathGrid(1.0, 50)};
  const double dt = n.grid.dt();
  for (int c = 0; c < 2; ++c) {
    std::vector<double> v(kDraws), sq(kDraws);
    for (int p = 0; p < kDraws; ++p) {
      v[p] = brownian_increment(n, p, 11)[c];
      sq[p] = v[p] * v[p];
    }
    EXPECT_LE(std::abs(mean_of(v)), 4.0 * std::sqrt(dt / kDraws));
    EXPECT_NEAR(mean_of(sq), dt, 0.05 * dt);
  }
}

TEST(SimulateForward, NoNoiseNoDriftIsTransport) {
  const PathGrid grid(1.0, 8);
  CoefficientSet c;
  c.sigma = Eigen::MatrixXd::Zero(1, 1);
  const LiftedState x0 = testing::state_1d(grid, {1, 2, 3, 4, 5, 6, 7, 8}, 9.0);
  const ForwardEnsemble ens = simulate_forward(c, 0.0, x0, {1, 2, 1, grid});
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(LiftedState(ens.state(1, k)), shift_steps(x0, k)) << k;
}

TEST(SimulateForward, DriftlessPresentIsBrownian) {
  const PathGrid grid(1.0, 16);
  CoefficientSet c;
  c.sigma = Eigen::MatrixXd::Constant(1, 1, 0.7);
  const NoiseSpec noise{5, 20, 1, grid};
  const ForwardEnsemble ens = simulate_forward(c, 0.25, constant_state(grid, 1.0), noise);
  EXPECT_EQ(ens.n_steps(), 12);
  for (int p = 0; p < 20; ++p) {
    double w = 0.0;
    for (int k = 0; k < ens.n_steps(); ++k) {
      w += brownian_increment(noise, p, ens.start_index() + k)[0];
      EXPECT_NEAR(ens.present(p, k + 1)[0], 1.0 + 0.7 * w, 1e-12);
    }
  }
}

TEST(SimulateForward, PointDelayMatchesMethodOfSteps) {
  const PathGrid grid(1.0, 64);
  CoefficientSet c;
  c.sigma = Eigen::MatrixXd::Zero(1, 1);
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = x.past_at(-0.5)[0]; };
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 1.0), {1, 1, 1, grid});
  // x' = x(s - 1/2), x = 1 on [-1, 0]: solved exactly one delay interval at a time.
  auto exact = [](double s) {
    if (s <= 0.5) return 1.0 + s;
    const double u = s - 0.5;
    return 1.5 + u + 0.5 * u * u;
  };
  for (int k = 0; k <= 64; ++k) EXPECT_NEAR(ens.present(0, k)[0], exact(grid.time_at(k)), 2.0 * grid.dt()) << k;
}

TEST(SimulateForward, ThreadCountDoesNotChangeValues) {
  const PathGrid grid(1.0, 20);
  CoefficientSet c;
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = -x.past_at(-0.5)[0]; };
  const NoiseSpec noise{9, 3000, 1, grid};
  const int saved = thread_count();
  set_thread_count(1);
  const ForwardEnsemble a = simulate_forward(c, 0.0, constant_state(grid, 1.0), noise);
  set_thread_count(4);
  const ForwardEnsemble b = simulate_forward(c, 0.0, constant_state(grid, 1.0), noise);
  set_thread_count(saved);
  for (int p = 0; p < noise.n_paths; p += 97) EXPECT_EQ(a.present(p, 20)[0], b.present(p, 20)[0]);
}

TEST(VariationalFlow, NoDriftIsTransport) {
  const PathGrid grid(1.0, 8);
  CoefficientSet c;
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.0), {2, 3, 1, grid});
  const LiftedState h = testing::state_1d(grid, {0, 1, 0, 2, 0, 3, 0, 4}, 1.0);
  const VariationalFlow flow = variational_flow(c, ens, h);
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(LiftedState(flow.direction(2, k)), shift_steps(h, k));
}

TEST(VariationalFlow, GronwallBound) {
  const PathGrid grid(1.0, 32);
  CoefficientSet c;
  c.lipschitz_c = 1.5;
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = 1.5 * std::sin(x.present()[0]); };
  const ForwardEnsemble ens = simulate_forward(c, 0.0, constant_state(grid, 0.2), {4, 50, 1, grid});
  const LiftedState h = constant_state(grid, 1.0);
  const VariationalFlow flow = variational_flow(c, ens, h);
  const double bound = std::exp(c.lipschitz_c * grid.horizon()) * sup_norm(h) * 1.1;
  for (int p = 0; p < 50; ++p) {
    for (int k = 0; k <= 32; ++k) EXPECT_LE(sup_norm(flow.direction(p, k)), bound);
  }
}

TEST(VariationalFlow, MatchesCentralDifferencesForLinearDrift) {
  const PathGrid grid(1.0, 20);
  CoefficientSet c;
  c.drift = [](double, const LiftedView& x, std::span<double> out) { out[0] = -0.8 * x.present()[0]; };
  const NoiseSpec noise{7, 10, 1, grid};
  const LiftedState x0 = constant_state(grid, 0.5);
  const LiftedState h = testing::state_1d(grid, std::vector<double>(20, 0.3), 1.0);
  const double eps = 1e-4;
  const ForwardEnsemble base = simulate_forward(c, 0.0, x0, noise);
  const ForwardEnsemble up = simulate_forward(c, 0.0, axpy(x0, eps, h), noise);
  const ForwardEnsemble down = simulate_forward(c, 0.0, axpy(x0, -eps, h), noise);
  const VariationalFlow flow = variational_flow(c, base, h);
  for (int p = 0; p < 10; ++p) {
    for (int k = 0; k <= 20; ++k) {
      const double fd = (up.present(p, k)[0] - down.present(p, k)[0]) / (2 * eps);
      const double xi = flow.direction(p, k).present()[0];
      EXPECT_LE(std::abs(fd - xi), 1e-3 * std::abs(xi));
    }
  }
}

TEST(EnsembleIo, BinaryRoundTrip) {
  const PathGrid grid(1.0, 6);
  CoefficientSet c;
  c.dim = 2;
  c.noise_dim = 2;
  c.sigma = Eigen::MatrixXd::Identity(2, 2);
  const std::vector<double> v{1.0, -1.0};
  const ForwardEnsemble ens = simulate_forward(c, 0.0, LiftedState::constant(grid, v), {3, 4, 2, grid});
  std::stringstream buf;
  write_ensemble_binary(buf, ens);
  const ForwardEnsemble back = read_ensemble_binary(buf);
  ASSERT_EQ(back.n_paths(), 4);
  ASSERT_EQ(back.dim(), 2);
  for (int p = 0; p < 4; ++p) {
    for (int k = 0; k <= 6; ++k) {
      EXPECT_EQ(back.present(p, k)[0], ens.present(p, k)[0]);
      EXPECT_EQ(back.present(p, k)[1], ens.present(p, k)[1]);
    }
  }
}

TEST(EnsembleIo, CsvHeader) {
  const PathGrid grid(1.0, 2);
  const ForwardEnsemble ens = simulate_forward(CoefficientSet{}, 0.0, constant_state(grid, 0.0), {1, 1, 1, grid});
  std::ostringstream os;
  write_ensemble_csv(os, ens);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "path,step,time,x1");
}

}  // namespace
}  // namespace pathflow
