#include "pathflow/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "pathflow/error.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/stats.hpp"

namespace pathflow {
namespace {

using Terms = std::vector<std::pair<double, const ValueRun*>>;

/// Present-only direction (v, 0).
LiftedState present_direction(const PathGrid& grid, std::span<const double> v) {
  LiftedState h(grid, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), h.present().begin());
  return h;
}

/// value_run with coefficient failures reported as a stencil overflow.
ValueRun stencil_run(const ValueQuery& q, double t0, const LiftedView& x) {
  try {
    return value_run(q, t0, x);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCoefficientEvaluation || e.kind() == ErrorKind::kDriverEvaluation) {
      fail(ErrorKind::kStencilOverflow, e.what());
    }
    throw;
  }
}

/// Removes from per-path values their least-squares projection on zero-mean functionals of
/// the Brownian increments dW at the given absolute steps: dW, dW^2 - dt and dW times the
/// path-wise sensitivities of the run that does not use those steps. The regressors have
/// mean zero, so the mean is unchanged in expectation while the O(dt^{-1/2}) noise of the
/// misaligned time stencil drops out.
void remove_increment_noise(std::vector<double>& values, const NoiseSpec& mc, const std::vector<int>& steps,
                            const std::vector<std::vector<double>>& sensitivities) {
  const int d1 = mc.noise_dim;
  const int per_step = d1 * (2 + static_cast<int>(sensitivities.size()));
  const int m = per_step * static_cast<int>(steps.size());
  const int n = static_cast<int>(values.size());
  const double dt = mc.grid.dt();
  Eigen::MatrixXd w(n, m);
  std::vector<double> dw(d1);
  for (int p = 0; p < n; ++p) {
    for (std::size_t s = 0; s < steps.size(); ++s) {
      fill_brownian_increment(mc, p, steps[s], dw);
      int col = static_cast<int>(s) * per_step;
      for (int j = 0; j < d1; ++j) {
        w(p, col++) = dw[j];
        w(p, col++) = dw[j] * dw[j] - dt;
        for (const auto& sens : sensitivities) w(p, col++) = dw[j] * sens[p];
      }
    }
  }
  const Eigen::Map<const Eigen::VectorXd> v(values.data(), n);
  const Eigen::RowVectorXd wmean = w.colwise().mean();
  const Eigen::MatrixXd wc = w.rowwise() - wmean;
  const Eigen::VectorXd beta =
      (wc.transpose() * wc).ldlt().solve(wc.transpose() * (v.array() - v.mean()).matrix());
  const Eigen::VectorXd adjusted = v - w * beta;
  for (int p = 0; p < n; ++p) values[p] = adjusted(p);
}

}  // namespace

nlohmann::json to_json(const ValueEstimate& v) {
  return nlohmann::json{{"mean", v.mean}, {"std_error", v.std_error}, {"n_paths", v.n_paths}};
}

ValueEstimate ValueRun::estimate() const {
  return {mean, std_error_of(contributions), static_cast<int>(contributions.size())};
}

ValueRun value_run(const ValueQuery& q, double t0, const LiftedView& x0) {
  require(static_cast<bool>(q.coeffs.terminal), ErrorKind::kInvalidArgument,
          "terminal condition is missing");
  require(x0.grid() == q.mc.grid, ErrorKind::kGridMismatch, "x0 and noise use different grids");
  const int k0 = x0.grid().step_of(t0);
  ValueRun run;
  if (k0 == x0.grid().n_steps()) {
    const double phi = q.coeffs.terminal(x0);
    run.mean = phi;
    run.contributions.assign(static_cast<std::size_t>(q.mc.n_paths), phi);
    return run;
  }
  const ForwardEnsemble ens = simulate_forward(q.coeffs, t0, x0, q.mc);
  if (!q.coeffs.driver && !q.options.martingale_correction) {
    run.contributions.resize(static_cast<std::size_t>(ens.n_paths()));
    parallel_for(run.contributions.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        run.contributions[p] = q.coeffs.terminal(ens.state(static_cast<int>(p), ens.n_steps()));
      }
    });
    for (double v : run.contributions) {
      require(std::isfinite(v), ErrorKind::kCoefficientEvaluation, "terminal value is non-finite");
    }
    run.mean = mean_of(run.contributions);
    return run;
  }
  BsdeSolution sol = solve_bsde(ens, q.coeffs, q.basis, q.options);
  run.mean = sol.y0();
  run.contributions = std::move(sol.contributions);
  return run;
}

ValueEstimate value(const ValueQuery& q) { return value_run(q, q.t0, q.x0).estimate(); }

std::vector<double> combine_contributions(const Terms& terms) {
  require(!terms.empty(), ErrorKind::kInvalidArgument, "empty stencil");
  const std::size_t n = terms.front().second->contributions.size();
  std::vector<double> out(n, 0.0);
  for (const auto& [w, run] : terms) {
    require(run->contributions.size() == n, ErrorKind::kInvalidArgument,
            "stencil runs use different path counts");
    for (std::size_t p = 0; p < n; ++p) out[p] += w * run->contributions[p];
  }
  return out;
}

ValueEstimate combine(const Terms& terms) {
  double mean = 0.0;
  for (const auto& [w, run] : terms) mean += w * run->mean;
  const auto c = combine_contributions(terms);
  return {mean, std_error_of(c), static_cast<int>(c.size())};
}

double default_eps(const LiftedView& x0) { return 1e-3 * (1.0 + sup_norm(x0)); }
double default_eps2(const LiftedView& x0) { return 5e-2 * (1.0 + sup_norm(x0)); }

DerivativeEstimate directional_derivative(const ValueQuery& q, const LiftedView& h,
                                          std::optional<double> eps) {
  const double e = eps.value_or(default_eps(q.x0));
  require(e > 0.0, ErrorKind::kInvalidArgument, "eps must be positive");
  DerivativeEstimate out;
  out.eps = e;
  if (sup_norm(h) == 0.0) {
    out.contributions.assign(static_cast<std::size_t>(q.mc.n_paths), 0.0);
    return out;
  }
  const ValueRun up = stencil_run(q, q.t0, axpy(q.x0, e, h));
  const ValueRun dn = stencil_run(q, q.t0, axpy(q.x0, -e, h));
  const double w = 1.0 / (2.0 * e);
  const Terms terms{{w, &up}, {-w, &dn}};
  out.mean = (up.mean - dn.mean) / (2.0 * e);
  out.contributions = combine_contributions(terms);
  out.std_error = std_error_of(out.contributions);
  return out;
}

ZIdentification z_identification_gap(const ValueQuery& q, std::optional<double> eps) {
  const CoefficientSet& c = q.coeffs;
  const PathGrid& grid = q.x0.grid();
  const int d1 = c.noise_dim;
  const double dt = grid.dt();
  const ForwardEnsemble ens = simulate_forward(c, q.t0, q.x0, q.mc);
  require(ens.n_steps() >= 1, ErrorKind::kInvalidArgument, "identification needs t0 < T");
  const BsdeSolution sol = solve_bsde(ens, c, q.basis, q.options);

  ZIdentification out;
  const int n = ens.n_paths();
  std::vector<double> y1(n);
  for (int p = 0; p < n; ++p) y1[p] = sol.y(p, 1);
  const double ybar = mean_of(y1);
  std::vector<double> col(n);
  double zn = 0.0, dn = 0.0;
  for (int j = 0; j < d1; ++j) {
    for (int p = 0; p < n; ++p) col[p] = (y1[p] - ybar) * ens.increment(p, 0)[j] / dt;
    out.z0.push_back(sol.z(0, 0)[j]);
    out.z0_std_error.push_back(std_error_of(col));
    std::vector<double> sj(c.dim);
    for (int i = 0; i < c.dim; ++i) sj[i] = c.sigma(i, j);
    const auto d = directional_derivative(q, present_direction(grid, sj), eps);
    out.du_sigma.push_back(d.mean);
    out.du_sigma_std_error.push_back(d.std_error);
    zn += out.z0[j] * out.z0[j];
    dn += (out.z0[j] - d.mean) * (out.z0[j] - d.mean);
  }
  out.gap = std::sqrt(dn) / (1.0 + std::sqrt(zn));

  // Decoupling-field consistency at interior steps.
  const int K = ens.n_steps();
  const int probes = std::min(n, 512);
  for (int k : {K / 4, K / 2, (3 * K) / 4}) {
    if (k < 1 || k >= K) continue;
    double acc = 0.0;
    std::vector<double> f(1 + d1), fu(1 + d1), fd(1 + d1);
    for (int p = 0; p < probes; ++p) {
      const LiftedView x = ens.state(p, k);
      sol.field(k, x, f);
      const double e = eps.value_or(default_eps(x));
      double num = 0.0, den = 0.0;
      for (int j = 0; j < d1; ++j) {
        std::vector<double> sj(c.dim);
        for (int i = 0; i < c.dim; ++i) sj[i] = c.sigma(i, j);
        const LiftedState h = present_direction(grid, sj);
        sol.field(k, axpy(x, e, h), fu);
        sol.field(k, axpy(x, -e, h), fd);
        const double du = (fu[0] - fd[0]) / (2.0 * e);
        num += (f[1 + j] - du) * (f[1 + j] - du);
        den += f[1 + j] * f[1 + j];
      }
      acc += std::sqrt(num) / (1.0 + std::sqrt(den));
    }
    out.interior.push_back({ens.time(k), acc / probes});
  }
  return out;
}

DerivativeEstimate second_trace(const ValueQuery& q, std::optional<double> eps2,
                                const std::optional<Eigen::MatrixXd>& frame) {
  const double e = eps2.value_or(default_eps2(q.x0));
  require(e > 0.0, ErrorKind::kInvalidArgument, "eps2 must be positive");
  const CoefficientSet& c = q.coeffs;
  const int d1 = c.noise_dim;
  Eigen::MatrixXd r = frame.value_or(Eigen::MatrixXd::Identity(d1, d1));
  require(r.rows() == d1 && r.cols() == d1, ErrorKind::kInvalidArgument, "frame must be d1 x d1");
  require((r.transpose() * r - Eigen::MatrixXd::Identity(d1, d1)).cwiseAbs().maxCoeff() < 1e-10,
          ErrorKind::kInvalidArgument, "frame is not orthonormal");
  const Eigen::MatrixXd dirs = c.sigma * r;

  const ValueRun center = stencil_run(q, q.t0, q.x0);
  std::vector<ValueRun> runs;
  runs.reserve(2 * d1);
  for (int j = 0; j < d1; ++j) {
    std::vector<double> v(dirs.col(j).data(), dirs.col(j).data() + dirs.rows());
    const LiftedState h = present_direction(q.x0.grid(), v);
    runs.push_back(stencil_run(q, q.t0, axpy(q.x0, e, h)));
    runs.push_back(stencil_run(q, q.t0, axpy(q.x0, -e, h)));
  }
  const double w = 0.5 / (e * e);
  Terms terms;
  for (const auto& run : runs) terms.emplace_back(w, &run);
  terms.emplace_back(-2.0 * w * d1, &center);
  const ValueEstimate est = combine(terms);
  DerivativeEstimate out;
  out.eps = e;
  out.mean = est.mean;
  out.std_error = est.std_error;
  out.contributions = combine_contributions(terms);
  return out;
}

nlohmann::json to_json(const ResidualReport& r) {
  const auto term = [](const ResidualTerm& t) {
    return nlohmann::json{{"value", t.value}, {"std_error", t.std_error}};
  };
  return nlohmann::json{{"t0", r.t0},
                        {"u", r.u},
                        {"du_dt", term(r.du_dt)},
                        {"du_Ax", term(r.du_ax)},
                        {"du_B", term(r.du_b)},
                        {"trace_term", term(r.trace_term)},
                        {"g_term", term(r.g_term)},
                        {"residual", r.residual},
                        {"error_budget", r.error_budget},
                        {"stencil", {{"eps", r.eps}, {"eps2", r.eps2}}},
                        {"grid", {{"T", r.horizon}, {"N", r.n_steps}}},
                        {"seed", r.seed},
                        {"n_paths", r.n_paths}};
}

ResidualReport pde_residual(double t0, const SmoothProfile& profile, const CoefficientSet& coeffs,
                            const NoiseSpec& mc, const RegressionBasis& basis,
                            const StencilParams& stencil, const BsdeOptions& options) {
  const PathGrid& grid = mc.grid;
  const int N = grid.n_steps();
  const int k0 = grid.step_of(t0);
  require(k0 <= N - 1, ErrorKind::kNonGridTime, "residual needs t0 <= T - dt");
  const ProfileSample sample = sample_profile(profile, grid);
  const LiftedState& x0 = sample.state;
  const int d = coeffs.dim;
  const int d1 = coeffs.noise_dim;
  const double dt = grid.dt();

  ValueQuery q;
  q.t0 = t0;
  q.x0 = x0;
  q.coeffs = coeffs;
  q.mc = mc;
  q.basis = basis;
  q.options = options;

  ResidualReport rep;
  rep.t0 = t0;
  rep.eps = stencil.eps.value_or(default_eps(x0));
  rep.eps2 = stencil.eps2.value_or(default_eps2(x0));
  rep.n_steps = N;
  rep.horizon = grid.horizon();
  rep.seed = mc.seed;
  rep.n_paths = mc.n_paths;

  const ValueRun center = stencil_run(q, t0, x0);
  rep.u = center.mean;

  // Time derivative at fixed x0: forward at 0, backward at T - dt, central elsewhere.
  std::vector<double> residual_paths(static_cast<std::size_t>(mc.n_paths), 0.0);
  const auto accumulate = [&](const std::vector<double>& c) {
    for (std::size_t p = 0; p < residual_paths.size(); ++p) residual_paths[p] += c[p];
  };
  {
    Terms terms;
    ValueRun a, b;
    if (k0 == 0) {
      a = stencil_run(q, grid.time_at(1), x0);
      terms = {{1.0 / dt, &a}, {-1.0 / dt, &center}};
    } else if (k0 == N - 1) {
      b = stencil_run(q, grid.time_at(k0 - 1), x0);
      terms = {{1.0 / dt, &center}, {-1.0 / dt, &b}};
    } else {
      a = stencil_run(q, grid.time_at(k0 + 1), x0);
      b = stencil_run(q, grid.time_at(k0 - 1), x0);
      terms = {{0.5 / dt, &a}, {-0.5 / dt, &b}};
    }
    std::vector<double> c = combine_contributions(terms);
    // Steps used by the earlier run only, and the start of the later run.
    const std::vector<int> steps = k0 == 0 ? std::vector<int>{0}
                                   : k0 == N - 1 ? std::vector<int>{k0 - 1}
                                                 : std::vector<int>{k0 - 1, k0};
    ValueQuery late = q;
    late.t0 = grid.time_at(k0 == N - 1 ? k0 : k0 + 1);
    std::vector<std::vector<double>> sens;
    for (int j = 0; j < d1; ++j) {
      std::vector<double> sj(d);
      for (int i = 0; i < d; ++i) sj[i] = coeffs.sigma(i, j);
      sens.push_back(directional_derivative(late, present_direction(grid, sj), rep.eps).contributions);
    }
    remove_increment_noise(c, mc, steps, sens);
    rep.du_dt = {mean_of(c), std_error_of(c)};
    accumulate(c);
  }

  const auto directional = [&](const LiftedView& h, ResidualTerm& slot) {
    const auto est = directional_derivative(q, h, rep.eps);
    slot = {est.mean, est.std_error};
    accumulate(est.contributions);
    return est;
  };
  directional(sample.direction, rep.du_ax);

  std::vector<double> b0(d, 0.0);
  if (coeffs.drift) coeffs.drift(t0, x0, b0);
  directional(present_direction(grid, b0), rep.du_b);

  const auto tr = second_trace(q, rep.eps2);
  rep.trace_term = {tr.mean, tr.std_error};
  accumulate(tr.contributions);

  // G(t0, x0, u, Du Sigma), linearised path-wise around the pooled estimates.
  if (coeffs.driver) {
    std::vector<DerivativeEstimate> dsig;
    std::vector<double> z(d1);
    for (int j = 0; j < d1; ++j) {
      std::vector<double> sj(d);
      for (int i = 0; i < d; ++i) sj[i] = coeffs.sigma(i, j);
      dsig.push_back(directional_derivative(q, present_direction(grid, sj), rep.eps));
      z[j] = dsig.back().mean;
    }
    const double u = center.mean;
    const double g0 = coeffs.driver(t0, x0, u, z);
    const double ey = 1e-6 * (1.0 + std::abs(u));
    const double gy = (coeffs.driver(t0, x0, u + ey, z) - coeffs.driver(t0, x0, u - ey, z)) / (2 * ey);
    std::vector<double> gz(d1);
    for (int j = 0; j < d1; ++j) {
      const double ez = 1e-6 * (1.0 + std::abs(z[j]));
      auto zu = z, zd = z;
      zu[j] += ez;
      zd[j] -= ez;
      gz[j] = (coeffs.driver(t0, x0, u, zu) - coeffs.driver(t0, x0, u, zd)) / (2 * ez);
    }
    std::vector<double> g_paths(residual_paths.size());
    for (std::size_t p = 0; p < g_paths.size(); ++p) {
      double g = g0 + gy * (center.contributions[p] - u);
      for (int j = 0; j < d1; ++j) g += gz[j] * (dsig[j].contributions[p] - z[j]);
      g_paths[p] = g;
      residual_paths[p] -= g;
    }
    rep.g_term = {g0, std_error_of(g_paths)};
  }

  rep.residual = rep.du_dt.value + rep.du_ax.value + rep.du_b.value + rep.trace_term.value -
                 rep.g_term.value;
  // Floating-point floor: differences of O(|u|) values divided by the stencil steps.
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(rep.u)) *
                          (1.0 / dt + 3.0 / rep.eps + d1 / (rep.eps2 * rep.eps2));
  rep.error_budget = std::hypot(std_error_of(residual_paths), roundoff);
  return rep;
}

FlowGap flow_property_gap(double t0, double t1, const LiftedView& x0, const CoefficientSet& coeffs,
                          const NoiseSpec& mc, const RegressionBasis& basis,
                          const FlowOptions& flow, const BsdeOptions& options) {
  const PathGrid& grid = x0.grid();
  const int k0 = grid.step_of(t0);
  const int k1 = grid.step_of(t1);
  require(k1 >= k0, ErrorKind::kInvalidArgument, "flow property needs t0 <= t1");
  FlowGap out;
  if (k1 == k0) {
    ValueQuery q;
    q.t0 = t0;
    q.x0 = LiftedState(x0);
    q.coeffs = coeffs;
    q.mc = mc;
    q.basis = basis;
    q.options = options;
    out.u0 = value(q).mean;
    out.expected = out.u0;
    return out;
  }
  const ForwardEnsemble ens = simulate_forward(coeffs, t0, x0, mc);
  const BsdeSolution sol = solve_bsde(ens, coeffs, basis, options);
  const int n = ens.n_paths();
  const int j1 = k1 - k0;
  const double dt = grid.dt();
  out.u0 = sol.y0();

  std::vector<double> later(n);
  if (flow.mode == FlowMode::kDecouplingField || j1 == ens.n_steps()) {
    for (int p = 0; p < n; ++p) later[p] = sol.y(p, j1);
  } else {
    ValueQuery inner;
    inner.coeffs = coeffs;
    inner.basis = basis;
    inner.options = options;
    inner.mc = mc;
    inner.mc.n_paths = flow.n_inner;
    for (int p = 0; p < n; ++p) {
      inner.mc.seed = derive_seed(mc.seed, 0x1000 + static_cast<std::uint64_t>(p));
      later[p] = value_run(inner, t1, ens.state(p, j1)).mean;
    }
  }
  std::vector<double> expected(n), diff(n);
  for (int p = 0; p < n; ++p) {
    double g = 0.0;
    for (int k = 0; k < j1; ++k) g += dt * sol.driver(p, k);
    expected[p] = later[p] - g;
    diff[p] = sol.contributions[p] - expected[p];
  }
  out.expected = mean_of(expected);
  out.gap = out.u0 - out.expected;
  out.std_error = std_error_of(diff);
  return out;
}

GrowthFit fit_growth_constant(const ValueQuery& base, const std::vector<LiftedState>& probes,
                              const std::vector<double>& times) {
  GrowthFit fit;
  fit.exponent = base.coeffs.growth_m;
  for (const auto& x : probes) {
    for (double t : times) {
      const double u = value_run(base, t, x).mean;
      const double bound = 1.0 + std::pow(sup_norm(x), fit.exponent);
      fit.constant = std::max(fit.constant, std::abs(u) / bound);
    }
  }
  return fit;
}

}  // namespace pathflow
