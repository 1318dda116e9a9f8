#include "pathflow/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "pathflow/benchmarks.hpp"
#include "pathflow/calculus.hpp"
#include "pathflow/control.hpp"
#include "pathflow/error.hpp"
#include "pathflow/mollify.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/stats.hpp"

namespace pathflow {
namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string g4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

/// Collects the numbers a criterion depends on, in a fixed textual form.
class Payload {
 public:
  void add(const std::string& key, double v) { text_ += key + "=" + g17(v) + ";"; }
  void add(const std::string& key, const std::vector<double>& v) {
    text_ += key + "=[";
    for (double x : v) text_ += g17(x) + ",";
    text_ += "];";
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

/// One outcome being assembled: a list of named checks and the payload.
struct Outcome {
  bool passed = true;
  std::string detail;
  Payload payload;

  void check(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
    passed = passed && ok;
  }
};

struct Context {
  Suite suite = Suite::kFull;
  std::function<LiftedState(const LiftedView&, int)> shift_op;

  bool fast() const { return suite == Suite::kFast; }
  /// Sample size, divided by 4 in the fast suite.
  int paths(int full) const { return fast() ? full / 4 : full; }
  /// Statistical and relative tolerances, widened by 2 in the fast suite.
  double widen(double full) const { return fast() ? 2.0 * full : full; }
  double sigmas() const { return widen(3.0); }
};

double gaussian(std::uint64_t seed, int row, int col) {
  NoiseSpec n{seed, row + 1, 1, PathGrid(1.0, col + 2)};
  double v = 0.0;
  fill_brownian_increment(n, row, col, std::span<double>(&v, 1));
  return v * std::sqrt(static_cast<double>(col + 2));
}

LiftedState random_state(const PathGrid& grid, int dim, std::uint64_t seed, int index) {
  LiftedState x(grid, dim);
  auto data = x.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = gaussian(seed, index, static_cast<int>(i));
  return x;
}

LiftedState constant_state(const PathGrid& grid, double c) {
  const std::vector<double> v{c};
  return LiftedState::constant(grid, v);
}

ValueQuery make_query(const Benchmark& b, const PathGrid& grid, const LiftedState& x0, std::uint64_t seed,
                      int n_paths) {
  ValueQuery q;
  q.t0 = 0.0;
  q.x0 = x0;
  q.coeffs = b.coefficients();
  q.mc = {seed, n_paths, q.coeffs.noise_dim, grid};
  return q;
}

// 1. Exact algebra.
void exact_algebra(const Context& ctx, Outcome& out) {
  constexpr int kTrials = 100;
  int round_trip_fail = 0;
  {
    const PathGrid grid(1.0, 32);
    for (int i = 0; i < kTrials; ++i) {
      const int dim = 1 + i % 2;
      const int k = i % (grid.n_steps() + 1);
      std::vector<double> samples(static_cast<std::size_t>(k + 1) * dim);
      for (std::size_t j = 0; j < samples.size(); ++j) samples[j] = gaussian(11, i, static_cast<int>(j));
      const SampledPath chi(dim, grid.dt(), samples);
      const LiftedState x = extend(chi.view(), grid);
      if (!(restrict(x, grid.time_at(k)) == chi)) ++round_trip_fail;
      const PathView v = restrict_view(x, k);
      if (!std::equal(v.data().begin(), v.data().end(), samples.begin(), samples.end())) ++round_trip_fail;
    }
  }
  out.check(round_trip_fail == 0, "restrict(extend) identity on " + std::to_string(kTrials) + " paths, " +
                                      std::to_string(round_trip_fail) + " mismatches");

  int semigroup_fail = 0;
  int pairs = 0;
  {
    const PathGrid grid(1.0, 16);
    const int n = grid.n_steps();
    for (int i = 0; i < kTrials; ++i) {
      const LiftedState x = random_state(grid, 1 + i % 2, 12, i);
      for (int a = 0; a <= n; ++a) {
        const LiftedState xa = ctx.shift_op(x, a);
        for (int b = 0; a + b <= n; ++b) {
          ++pairs;
          if (!(ctx.shift_op(xa, b) == ctx.shift_op(x, a + b))) ++semigroup_fail;
        }
      }
    }
  }
  out.check(semigroup_fail == 0, "semigroup law over " + std::to_string(pairs) + " (state, s, t) triples, " +
                                     std::to_string(semigroup_fail) + " mismatches");

  double worst = 0.0;
  for (int i = 0; i < kTrials; ++i) {
    const double horizon = 0.25 * (1 + i % 8);
    const PathGrid grid(horizon, 8 + i % 25);
    const LiftedState x = random_state(grid, 1 + i % 3, 13, i);
    worst = std::max(worst, l2_norm(x) / (std::sqrt(1.0 + horizon) * sup_norm(x)));
  }
  out.check(worst <= 1.0, "max l2 / (sqrt(1 + T) sup) = " + g4(worst));
  out.payload.add("round_trip_fail", round_trip_fail);
  out.payload.add("semigroup_fail", semigroup_fail);
  out.payload.add("norm_ratio", worst);
}

// 2. Lift/unlift equivalence.
void lift_unlift(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("point-delay");
  const PathGrid grid(b.horizon, 64);
  const CoefficientSet c = b.coefficients();
  const NoiseSpec noise{21, ctx.paths(1000), c.noise_dim, grid};
  const LiftedState x0 = constant_state(grid, 1.0);
  const ForwardEnsemble ens = simulate_forward(c, 0.0, x0, noise);
  const std::vector<double> start{1.0};
  const PathView gamma(1, grid.dt(), start);
  const auto plain = simulate_unlifted(b.path_drift, c.sigma, gamma, noise);
  long mismatches = 0;
  std::vector<double> terminal(noise.n_paths);
  for (int p = 0; p < noise.n_paths; ++p) {
    for (int k = 0; k <= ens.n_steps(); ++k) {
      if (ens.present(p, k)[0] != plain[p][k]) ++mismatches;
    }
    terminal[p] = ens.present(p, ens.n_steps())[0];
  }
  out.check(mismatches == 0, std::to_string(noise.n_paths) + " paths x 65 samples bit-identical, " +
                                 std::to_string(mismatches) + " mismatches");
  out.payload.add("mismatches", static_cast<double>(mismatches));
  out.payload.add("terminal_mean", mean_of(terminal));
}

// 3. Gaussian value oracle.
void gaussian_value(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("heat-present-square");
  const PathGrid grid(b.horizon, 50);
  const ValueQuery q = make_query(b, grid, constant_state(grid, 0.5), 31, ctx.paths(10000));
  const ValueEstimate v = value(q);
  const double ref = reference_value(b, 0.0, q.x0);
  out.check(std::abs(v.mean - ref) <= ctx.sigmas() * v.std_error,
            "u = " + g4(v.mean) + " vs " + g4(ref) + ", band " + g4(ctx.sigmas() * v.std_error));
  out.check(v.std_error <= ctx.widen(0.03), "SE = " + g4(v.std_error));
  out.payload.add("u", v.mean);
  out.payload.add("se", v.std_error);
}

// 4. Linear BSDE: regression solver against the Gamma-weighted representation.
void linear_cross(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("linear-bsde");
  const PathGrid grid(b.horizon, 50);
  const ValueQuery q = make_query(b, grid, constant_state(grid, 0.0), 41, ctx.paths(10000));
  const ValueEstimate v = value(q);
  const LinearBsdeSpec spec = LinearBsdeSpec::constant(0.3, {0.2}, 0.1, 1.0, b.horizon);
  NoiseSpec oracle_noise = q.mc;
  oracle_noise.seed = derive_seed(q.mc.seed, 0x0AC1E);
  const LinearBsdeResult lin = linear_bsde_closed_form(spec, oracle_noise, LinearOracleMode::kMonteCarlo);
  const double se = std::hypot(v.std_error, lin.y0_std_error);
  out.check(std::abs(v.mean - lin.y0) <= ctx.sigmas() * se,
            "Y0 = " + g4(v.mean) + " vs " + g4(lin.y0) + ", band " + g4(ctx.sigmas() * se));
  out.payload.add("y0", v.mean);
  out.payload.add("oracle", lin.y0);
  out.payload.add("se", se);
}

// 5. Exponential driver.
void exponential_driver(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("exponential-driver");
  const PathGrid grid(b.horizon, 50);
  const ValueQuery q = make_query(b, grid, constant_state(grid, 0.0), 51, ctx.paths(10000));
  const ValueEstimate v = value(q);
  const double ref = std::exp(0.5);
  const double tol = std::max(ctx.sigmas() * v.std_error, ctx.widen(0.01) * ref);
  out.check(std::abs(v.mean - ref) <= tol, "Y0 = " + g4(v.mean) + " vs " + g4(ref) + ", tol " + g4(tol));
  out.payload.add("y0", v.mean);
  out.payload.add("se", v.std_error);
}

// 6. Z-identification, averaged over seed replications at n and 4n paths.
void z_identification(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("heat-present-square");
  const PathGrid grid(b.horizon, 50);
  constexpr int kReplications = 4;
  const int n = ctx.paths(10000);
  std::vector<double> small, large;
  for (int r = 0; r < kReplications; ++r) {
    for (int scale : {1, 4}) {
      ValueQuery q = make_query(b, grid, constant_state(grid, 0.5), derive_seed(61, r), scale * n);
      q.options.martingale_correction = true;
      (scale == 1 ? small : large).push_back(z_identification_gap(q).gap);
    }
  }
  const double worst = *std::max_element(small.begin(), small.end());
  const double m1 = mean_of(small), m4 = mean_of(large);
  out.check(worst <= ctx.widen(0.05), "max gap " + g4(worst) + " at " + std::to_string(n) + " paths");
  out.check(m4 < m1, "mean gap " + g4(m1) + " -> " + g4(m4) + " at 4x paths");
  out.payload.add("gaps_n", small);
  out.payload.add("gaps_4n", large);
}

// 7. Kolmogorov residual.
void pde_residuals(const Context& ctx, Outcome& out) {
  for (const char* name : {"heat-present-linear", "heat-present-square"}) {
    const Benchmark& b = find_benchmark(name);
    const NoiseSpec mc{71, ctx.paths(10000), 1, PathGrid(b.horizon, 50)};
    const ResidualReport r = pde_residual(0.0, b.profile, b.coefficients(), mc, RegressionBasis{});
    out.check(std::abs(r.residual) <= ctx.sigmas() * r.error_budget,
              std::string(name) + " residual " + g4(r.residual) + ", budget " + g4(r.error_budget));
    out.payload.add(std::string(name) + ".residual", r.residual);
    out.payload.add(std::string(name) + ".budget", r.error_budget);
  }
  const Benchmark& b = find_benchmark("delay-integral");
  const CoefficientSet c = b.coefficients();
  StencilParams st;
  std::vector<double> mags;
  std::string levels;
  for (int n_steps : {32, 64, 128}) {
    const NoiseSpec mc{72, ctx.paths(10000), c.noise_dim, PathGrid(b.horizon, n_steps)};
    const ResidualReport r = pde_residual(0.0, b.profile, c, mc, RegressionBasis{}, st);
    mags.push_back(std::abs(r.residual));
    levels += (levels.empty() ? "" : ", ") + g4(r.residual) + " (N=" + std::to_string(n_steps) + ")";
    st = {0.5 * r.eps, 0.5 * r.eps2};
    out.payload.add("delay.residual." + std::to_string(n_steps), r.residual);
  }
  out.check(mags[1] <= mags[0] && mags[2] <= mags[1], "delay-integral |residual| non-increasing: " + levels);
}

// 8. Flow property by nested Monte Carlo.
void flow_property(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("delay-integral");
  const PathGrid grid(b.horizon, 64);
  const ProfileSample x0 = sample_profile(b.profile, grid);
  const NoiseSpec mc{81, ctx.paths(2000), 1, grid};
  const FlowOptions flow{FlowMode::kNested, 256};
  const FlowGap g = flow_property_gap(0.0, grid.time_at(16), x0.state, b.coefficients(), mc, RegressionBasis{}, flow);
  const double tol = std::max(ctx.sigmas() * g.std_error, ctx.widen(0.02) * std::abs(g.u0));
  out.check(std::abs(g.gap) <= tol, "gap " + g4(g.gap) + " (u = " + g4(g.u0) + "), tol " + g4(tol));
  out.payload.add("u0", g.u0);
  out.payload.add("expected", g.expected);
  out.payload.add("se", g.std_error);
}

// 9. Mollifier suite.
void mollifier_suite(const Context& ctx, Outcome& out) {
  const std::vector<int> n_list{4, 16, 64};
  double worst_mass = 0.0;
  for (int n : n_list) worst_mass = std::max(worst_mass, std::abs(mollifier_mass({n, 64}) - 1.0));
  out.check(worst_mass <= 1e-10, "max |mass - 1| = " + g4(worst_mass));
  out.payload.add("mass_defect", worst_mass);

  const PathGrid grid(1.0, 256);
  using F = std::function<double(double)>;
  const std::vector<std::pair<F, F>> probes{
      {[](double r) { return std::sin(3 * r) + r; }, [](double r) { return 3 * std::cos(3 * r) + 1; }},
      {[](double r) { return std::cos(2 * r); }, [](double r) { return -2 * std::sin(2 * r); }},
      {[](double r) { return r * r; }, [](double r) { return 2 * r; }},
      {[](double r) { return std::exp(r); }, [](double r) { return std::exp(r); }},
      {[](double r) { return std::atan(4 * r + 2); }, [](double r) { return 4 / (1 + (4 * r + 2) * (4 * r + 2)); }},
  };
  bool decreasing = true;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& [f, df] = probes[i];
    const SmoothProfile prof{1, [f](double r) { return std::vector<double>{f(r)}; },
                             [df](double r) { return std::vector<double>{df(r)}; }};
    const auto rows = smoothing_report(sample_profile(prof, grid).state, n_list, 64, 5);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      worst_ratio = std::max(worst_ratio, rows[j].boundedness_ratio);
      if (j > 0 && !(rows[j].sup_error < rows[j - 1].sup_error)) decreasing = false;
      out.payload.add("sup_error." + std::to_string(i) + "." + std::to_string(rows[j].n), rows[j].sup_error);
    }
  }
  out.check(decreasing, "sup error strictly decreasing on 5 continuous probes");
  out.check(worst_ratio <= 1.05, "max boundedness ratio " + g4(worst_ratio));

  const Benchmark& b = find_benchmark("delay-integral");
  const PathGrid vgrid(b.horizon, 64);
  const ValueQuery q = make_query(b, vgrid, sample_profile(b.profile, vgrid).state, 91, ctx.paths(10000));
  const ValueRun base = value_run(q, 0.0, q.x0);
  std::vector<ValueEstimate> diffs;
  std::string trail;
  for (int n : n_list) {
    ValueQuery qn = q;
    qn.coeffs = approximate_coefficients(q.coeffs, {n, 64}, vgrid);
    const ValueRun run = value_run(qn, 0.0, q.x0);
    diffs.push_back(combine({{1.0, &run}, {-1.0, &base}}));
    trail += (trail.empty() ? "" : ", ") + g4(diffs.back().mean);
    out.payload.add("e2e." + std::to_string(n), diffs.back().mean);
  }
  bool e2e = true;
  for (std::size_t j = 1; j < diffs.size(); ++j) {
    const bool down = std::abs(diffs[j].mean) < std::abs(diffs[j - 1].mean);
    const bool noise_level = std::abs(diffs[j].mean) <= ctx.sigmas() * diffs[j].std_error;
    e2e = e2e && (down || noise_level);
  }
  out.check(e2e, "u^n - u over n = 4, 16, 64: " + trail);
}

// 10. Hamiltonian exactness.
void hamiltonian_exactness(const Context&, Outcome& out) {
  auto half_square = [](std::span<const double> u) {
    double s = 0.0;
    for (double v : u) s += v * v;
    return 0.5 * s;
  };
  double worst_rel = 0.0;
  for (int i = 0; i < 100; ++i) {
    ControlProblem p;
    p.noise_dim = 1 + i % 2;
    p.sigma = Eigen::MatrixXd::Identity(1, p.noise_dim);
    p.control_cost = half_square;
    std::vector<double> z(p.noise_dim);
    double norm2 = 0.0;
    for (int j = 0; j < p.noise_dim; ++j) {
      z[j] = gaussian(101, i, j);
      norm2 += z[j] * z[j];
    }
    const double target = 0.1 + 4.9 * (i + 0.5) / 100.0;
    for (double& v : z) v *= target / std::sqrt(norm2);
    const double exact = -0.5 * target * target;
    worst_rel = std::max(worst_rel, std::abs(hamiltonian(p, z).value - exact) / std::abs(exact));
  }
  out.check(worst_rel <= 1e-6, "numeric H vs -|z|^2/2, max relative error " + g4(worst_rel));

  constexpr double kLambda = 1.0;
  ControlProblem p;
  p.control_cost = half_square;
  p.control_bound = kLambda;
  double worst_numeric = 0.0, worst_formula = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double z = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 1.0 * i / 99.0) * kLambda;
    const double r = std::abs(z);
    // min over |u| <= Lambda of u^2/2 + z u, solved by hand.
    const double oracle = r <= kLambda ? -0.5 * r * r : 0.5 * kLambda * kLambda - kLambda * r;
    const double formula = -truncated_quadratic_neg_hamiltonian(r, kLambda);
    const std::vector<double> zv{z};
    worst_formula = std::max(worst_formula, std::abs(formula - oracle));
    worst_numeric = std::max(worst_numeric, std::abs(hamiltonian(p, zv).value - formula) / (1.0 + std::abs(formula)));
  }
  out.check(worst_formula <= 1e-15, "truncated formula vs direct minimum, max error " + g4(worst_formula));
  out.check(worst_numeric <= 1e-12, "numeric truncated H vs formula, max error " + g4(worst_numeric));
  out.payload.add("rel", worst_rel);
  out.payload.add("formula", worst_formula);
  out.payload.add("numeric", worst_numeric);
}

// 11. LQ control end-to-end.
void lq_control(const Context& ctx, Outcome& out) {
  const Benchmark& b = find_benchmark("lq-control");
  const PathGrid grid(b.horizon, 50);
  const LiftedState x0 = sample_profile(b.profile, grid).state;
  const CoefficientSet fwd = b.coefficients();
  const ControlProblem p = b.control();
  const NoiseSpec mc{111, ctx.paths(10000), 1, grid};
  const HjbResult hjb = solve_hjb_adaptive(p, 0.0, x0, fwd, mc, RegressionBasis{}, 4.0);
  const ValueEstimate& v = hjb.value;
  // <q, y0> - |sigma^T q|^2 T / 2 with q = 1, sigma = 1.
  const double oracle = x0.present()[0] - 0.5 * b.horizon;
  out.check(std::abs(v.mean - oracle) <= ctx.sigmas() * v.std_error,
            "v = " + g4(v.mean) + " vs " + g4(oracle) + ", band " + g4(ctx.sigmas() * v.std_error));
  out.payload.add("v", v.mean);
  out.payload.add("v_se", v.std_error);

  for (std::uint64_t tag : {1, 2}) {
    NoiseSpec fresh = mc;
    fresh.seed = derive_seed(mc.seed, 0xF4E5 + tag);
    const ClosedLoopResult cl = closed_loop(p, 0.0, x0, hjb.policy, fwd, fresh);
    const double tol = std::max(ctx.sigmas() * std::hypot(cl.cost.std_error, v.std_error), ctx.widen(0.02) * std::abs(v.mean));
    out.check(std::abs(cl.cost.mean - v.mean) <= tol,
              "closed-loop cost " + g4(cl.cost.mean) + " (seed " + std::to_string(tag) + "), tol " + g4(tol));
    out.payload.add("closed_loop." + std::to_string(tag), cl.cost.mean);
  }

  NoiseSpec fresh = mc;
  fresh.seed = derive_seed(mc.seed, 0xF4E5);
  const ValueEstimate zero = cost(p, 0.0, x0, constant_control({0.0}), fwd, fresh);
  const double expected_gap = 0.5 * b.horizon;
  const double se0 = std::hypot(zero.std_error, v.std_error);
  out.check(std::abs(zero.mean - v.mean - expected_gap) <= ctx.sigmas() * se0,
            "cost(0) - v = " + g4(zero.mean - v.mean) + " vs " + g4(expected_gap) + ", band " + g4(ctx.sigmas() * se0));
  out.payload.add("zero_cost", zero.mean);

  const PolicyField& policy = hjb.policy;
  const FeedbackFn synthesized = [&policy](int, int k, const LiftedView& x, std::span<double> u) {
    policy.control(k, x, u);
  };
  const AuditResult a = fundamental_relation_audit(p, 0.0, x0, synthesized, policy, fwd, fresh);
  out.check(std::abs(a.gap.mean) <= ctx.sigmas() * a.gap.std_error + 1e-10,
            "policy gap " + g4(a.gap.mean) + ", defect " + g4(a.identity_defect));
  out.check(std::abs(a.identity_defect) <= ctx.sigmas() * a.identity_std_error,
            "policy identity defect within " + g4(ctx.sigmas() * a.identity_std_error));
  out.payload.add("policy_gap", a.gap.mean);

  bool gaps_ok = true, identity_ok = true;
  double max_gap = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double u = -3.0 + 6.0 * (0.5 * (std::erf(gaussian(112, i, 0) / std::sqrt(2.0)) + 1.0));
    const AuditResult c = fundamental_relation_audit(p, 0.0, x0, constant_control({u}), policy, fwd, fresh);
    gaps_ok = gaps_ok && c.gap.mean <= ctx.sigmas() * c.gap.std_error;
    identity_ok = identity_ok && std::abs(c.identity_defect) <= ctx.sigmas() * c.identity_std_error;
    max_gap = std::max(max_gap, c.gap.mean);
    out.payload.add("const_gap." + std::to_string(i), c.gap.mean);
  }
  out.check(gaps_ok, "10 constant controls: gap within band, max gap " + g4(max_gap));
  out.check(identity_ok, "10 constant controls: identity defect within band");
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  void (*run)(const Context&, Outcome&);
};

constexpr Criterion kCriteria[] = {
    {1, "exact algebra", 1.0, exact_algebra},
    {2, "lift/unlift equivalence", 10.0, lift_unlift},
    {3, "Gaussian value oracle", 30.0, gaussian_value},
    {4, "linear BSDE cross-solver", 60.0, linear_cross},
    {5, "exponential-driver oracle", 60.0, exponential_driver},
    {6, "Z-identification", 120.0, z_identification},
    {7, "PDE residual", 300.0, pde_residuals},
    {8, "flow property", 120.0, flow_property},
    {9, "mollifier suite", 30.0, mollifier_suite},
    {10, "Hamiltonian exactness", 1.0, hamiltonian_exactness},
    {11, "LQ control end-to-end", 300.0, lq_control},
};

CriterionResult run_one(const Criterion& c, const Context& ctx) {
  CriterionResult r;
  r.id = c.id;
  r.name = c.name;
  r.budget_seconds = c.budget_seconds;
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    c.run(ctx, out);
  } catch (const std::exception& e) {
    out.check(false, std::string("threw: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.passed = out.passed;
  r.detail = out.detail;
  r.payload = out.payload.str();
  if (ctx.suite == Suite::kFull && r.seconds > r.budget_seconds) {
    r.passed = false;
    r.detail += "; FAILED time " + g4(r.seconds) + " s over budget";
  }
  return r;
}

bool selected(const AcceptanceOptions& o, int id) {
  return o.only.empty() || std::find(o.only.begin(), o.only.end(), id) != o.only.end();
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  Context ctx;
  ctx.suite = options.suite;
  ctx.shift_op = options.shift_op ? options.shift_op
                                  : [](const LiftedView& x, int k) { return shift_steps(x, k); };
  require(!options.thread_counts.empty(), ErrorKind::kInvalidArgument, "thread_counts is empty");

  const int saved_threads = thread_count();
  std::vector<CriterionResult> results;
  auto emit = [&](CriterionResult r) {
    if (options.on_result) options.on_result(r);
    results.push_back(std::move(r));
  };

  set_thread_count(options.thread_counts.front());
  for (const Criterion& c : kCriteria) {
    if (selected(options, c.id)) emit(run_one(c, ctx));
  }

  if (selected(options, 12)) {
    CriterionResult det;
    det.id = 12;
    det.name = "determinism";
    const auto start = std::chrono::steady_clock::now();
    const std::vector<CriterionResult> baseline = results;
    det.passed = true;
    int compared = 0;
    for (std::size_t t = 1; t < options.thread_counts.size(); ++t) {
      set_thread_count(options.thread_counts[t]);
      for (const CriterionResult& base : baseline) {
        const CriterionResult again = run_one(kCriteria[base.id - 1], ctx);
        ++compared;
        if (again.payload != base.payload) {
          det.passed = false;
          det.detail += "criterion " + std::to_string(base.id) + " differs at " +
                        std::to_string(options.thread_counts[t]) + " threads; ";
        }
      }
    }
    det.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (compared == 0) {
      det.passed = false;
      det.detail = "no criteria to compare";
    } else if (det.passed) {
      std::string counts;
      for (int n : options.thread_counts) counts += (counts.empty() ? "" : ", ") + std::to_string(n);
      det.detail = std::to_string(baseline.size()) + " criteria byte-identical across threads {" + counts + "}";
    }
    emit(det);
  }
  set_thread_count(saved_threads);
  return results;
}

std::string format_result(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "%s %2d %-26s %8.2f s  ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                r.seconds);
  return head + r.detail;
}

void write_scorecard_csv(std::ostream& os, const std::vector<CriterionResult>& results) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  os << "id,name,passed,seconds,budget_seconds,detail\n";
  for (const auto& r : results) {
    os << r.id << "," << quote(r.name) << "," << (r.passed ? 1 : 0) << "," << g17(r.seconds) << ","
       << g17(r.budget_seconds) << "," << quote(r.detail) << "\n";
  }
}

}  // namespace pathflow
