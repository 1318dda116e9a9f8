#include "pathflow/control.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "pathflow/error.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/stats.hpp"

namespace pathflow {
namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Unit probe directions: +-e_i and, for d1 >= 2, the normalised diagonals of coordinate pairs.
std::vector<std::vector<double>> probe_directions(int d1) {
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < d1; ++i) {
    for (double s : {1.0, -1.0}) {
      std::vector<double> v(d1, 0.0);
      v[i] = s;
      dirs.push_back(v);
    }
  }
  for (int i = 0; i < d1; ++i) {
    for (int j = i + 1; j < d1; ++j) {
      for (double si : {1.0, -1.0}) {
        for (double sj : {1.0, -1.0}) {
          std::vector<double> v(d1, 0.0);
          v[i] = si / std::sqrt(2.0);
          v[j] = sj / std::sqrt(2.0);
          dirs.push_back(v);
        }
      }
    }
  }
  return dirs;
}

/// True when u is preferred to v under (objective, |u|, lexicographic).
bool better(double fu, std::span<const double> u, double fv, std::span<const double> v) {
  const double tol = 1e-14 * (1.0 + std::abs(fv));
  if (fu < fv - tol) return true;
  if (fu > fv + tol) return false;
  const double nu = norm(u), nv = norm(v);
  if (nu < nv - 1e-15) return true;
  if (nu > nv + 1e-15) return false;
  return std::lexicographical_compare(u.begin(), u.end(), v.begin(), v.end());
}

void project(std::vector<double>& u, double box, std::optional<double> ball) {
  for (double& x : u) x = std::clamp(x, -box, box);
  if (ball) {
    const double n = norm(u);
    if (n > *ball) {
      for (double& x : u) x *= *ball / n;
    }
  }
}

HamiltonianValue numeric_hamiltonian(const ControlProblem& p, std::span<const double> z) {
  const int d1 = p.noise_dim;
  const auto objective = [&](std::span<const double> u) { return p.control_cost(u) + dot(z, u); };
  double radius = p.numeric.grid_radius ? *p.numeric.grid_radius
                                        : std::max(1.0, coercivity_fit(p).radius(norm(z)));
  if (p.control_bound) radius = std::min(radius, *p.control_bound);

  // Grid search over the box, restricted to the ball when bounded.
  int per_axis = std::max(3, p.numeric.n_grid);
  while (d1 > 1 && std::pow(per_axis, d1) > 40000.0) per_axis = std::max(3, per_axis / 2 | 1);
  std::vector<int> idx(d1, 0);
  std::vector<double> u(d1), best(d1, 0.0);
  double best_f = std::numeric_limits<double>::infinity();
  bool have = false;
  while (true) {
    for (int i = 0; i < d1; ++i) u[i] = -radius + 2.0 * radius * idx[i] / (per_axis - 1);
    if (!p.control_bound || norm(u) <= *p.control_bound * (1.0 + 1e-12)) {
      const double f = objective(u);
      if (!have || better(f, u, best_f, best)) {
        best = u;
        best_f = f;
        have = true;
      }
    }
    int pos = 0;
    while (pos < d1 && ++idx[pos] == per_axis) idx[pos++] = 0;
    if (pos == d1) break;
  }

  // Projected Newton refinement with finite-difference derivatives.
  for (int it = 0; it < p.numeric.refine_iters; ++it) {
    const double h = 1e-4 * (1.0 + norm(best));
    Eigen::VectorXd g(d1);
    Eigen::MatrixXd hess(d1, d1);
    std::vector<double> a = best;
    for (int i = 0; i < d1; ++i) {
      a[i] = best[i] + h;
      const double fp = objective(a);
      a[i] = best[i] - h;
      const double fm = objective(a);
      a[i] = best[i];
      g(i) = (fp - fm) / (2.0 * h);
      hess(i, i) = (fp - 2.0 * best_f + fm) / (h * h);
    }
    for (int i = 0; i < d1; ++i) {
      for (int j = i + 1; j < d1; ++j) {
        double acc = 0.0;
        for (double si : {1.0, -1.0}) {
          for (double sj : {1.0, -1.0}) {
            a = best;
            a[i] += si * h;
            a[j] += sj * h;
            acc += si * sj * objective(a);
          }
        }
        hess(i, j) = hess(j, i) = acc / (4.0 * h * h);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(g);
    std::vector<double> cand(d1);
    for (int i = 0; i < d1; ++i) cand[i] = best[i] - step(i);
    project(cand, radius, p.control_bound);
    const double fc = objective(cand);
    if (!(fc <= best_f)) break;
    best = cand;
    best_f = fc;
  }
  return {best_f, best};
}

}  // namespace

double Coercivity::radius(double z_norm) const { return 2.0 * (z_norm + std::sqrt(b)) / a; }

Coercivity coercivity_fit(const ControlProblem& p) {
  require(static_cast<bool>(p.control_cost), ErrorKind::kInvalidArgument, "control cost is missing");
  const int d1 = p.noise_dim;
  const auto dirs = probe_directions(d1);
  const std::vector<double> radii = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
  std::vector<double> zero(d1, 0.0), u(d1);
  Coercivity c;
  c.min_q = p.control_cost(zero);
  for (const auto& d : dirs) {
    for (double r : radii) {
      for (int i = 0; i < d1; ++i) u[i] = r * d[i];
      c.min_q = std::min(c.min_q, p.control_cost(u));
    }
  }
  double a = std::numeric_limits<double>::infinity();
  for (const auto& d : dirs) {
    double ratio_small = 0.0, ratio_large = 0.0;
    for (double r : radii) {
      if (r < 4.0) continue;
      for (int i = 0; i < d1; ++i) u[i] = r * d[i];
      const double ratio = (p.control_cost(u) - c.min_q) / (r * r);
      a = std::min(a, ratio);
      if (r == 8.0) ratio_small = ratio;
      if (r == 32.0) ratio_large = ratio;
    }
    if (!(ratio_large > 0.0) || ratio_large < 0.5 * ratio_small) {
      fail(ErrorKind::kNonCoercive, "control cost grows slower than quadratically");
    }
  }
  c.a = 0.5 * a;
  require(c.a > 0.0 && std::isfinite(c.a), ErrorKind::kNonCoercive, "no positive coercivity constant");
  for (const auto& d : dirs) {
    for (double r : radii) {
      for (int i = 0; i < d1; ++i) u[i] = r * d[i];
      c.b = std::max(c.b, c.a * r * r - p.control_cost(u));
    }
  }
  c.b = std::max(c.b, -p.control_cost(zero));
  return c;
}

double cutoff_factor(double r, double truncation) {
  if (r <= truncation) return 1.0;
  if (r >= truncation + 1.0) return 0.0;
  const double t = r - truncation;
  return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

std::vector<double> smooth_cutoff(std::span<const double> z, double truncation) {
  const double s = cutoff_factor(norm(z), truncation);
  std::vector<double> out(z.begin(), z.end());
  if (s != 1.0) {
    for (double& v : out) v *= s;
  }
  return out;
}

HamiltonianValue hamiltonian(const ControlProblem& p, std::span<const double> z) {
  require(static_cast<int>(z.size()) == p.noise_dim, ErrorKind::kInvalidArgument,
          "z must have noise_dim entries");
  for (double v : z) require(std::isfinite(v), ErrorKind::kInvalidArgument, "z must be finite");
  std::vector<double> zz(z.begin(), z.end());
  if (p.truncation) zz = smooth_cutoff(z, *p.truncation);
  if (p.closed_form) return p.closed_form(zz);
  return numeric_hamiltonian(p, zz);
}

ControlProblem truncate_hamiltonian(const ControlProblem& p, double truncation) {
  require(truncation > 0.0, ErrorKind::kInvalidArgument, "truncation level must be positive");
  ControlProblem out = p;
  out.truncation = truncation;
  return out;
}

HamiltonianValue quadratic_hamiltonian(std::span<const double> z) {
  HamiltonianValue h;
  h.value = -0.5 * dot(z, z);
  h.argmin.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) h.argmin[i] = -z[i];
  return h;
}

double truncated_quadratic_neg_hamiltonian(double z_norm, double lambda) {
  return z_norm <= lambda ? 0.5 * z_norm * z_norm : lambda * z_norm - 0.5 * lambda * lambda;
}

void PolicyField::z_hat(int k, const LiftedView& x, std::span<double> z) const {
  require(k >= 0 && k < n_steps(), ErrorKind::kIndexOutOfRange, "policy step out of range");
  const int d1 = problem.noise_dim;
  std::vector<double> raw(static_cast<std::size_t>(basis.n_raw(x.dim()))), out(1 + d1);
  basis.evaluate(x, raw);
  fits[k].model.predict(raw, out);
  std::copy(out.begin() + 1, out.end(), z.begin());
}

bool PolicyField::in_hull(int k, const LiftedView& x) const {
  std::vector<double> raw(static_cast<std::size_t>(basis.n_raw(x.dim())));
  basis.evaluate(x, raw);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double span = hull_hi[k][i] - hull_lo[k][i];
    const double tol = 1e-9 * (1.0 + std::abs(span));
    if (raw[i] < hull_lo[k][i] - tol || raw[i] > hull_hi[k][i] + tol) return false;
  }
  return true;
}

void PolicyField::control(int k, const LiftedView& x, std::span<double> u) const {
  std::vector<double> z(static_cast<std::size_t>(problem.noise_dim));
  z_hat(k, x, z);
  const HamiltonianValue h = hamiltonian(problem, z);
  std::copy(h.argmin.begin(), h.argmin.end(), u.begin());
  const double n = norm(u);
  if (n > u_max) {
    for (double& v : u) v *= u_max / n;
  }
}

HjbResult solve_hjb(const ControlProblem& p, double t0, const LiftedView& x0,
                    const CoefficientSet& forward, const NoiseSpec& mc, const RegressionBasis& basis,
                    double truncation, const BsdeOptions& options) {
  require(truncation > 0.0, ErrorKind::kInvalidArgument, "truncation level must be positive");
  require(static_cast<bool>(p.terminal_cost), ErrorKind::kInvalidArgument, "terminal cost is missing");
  require(forward.dim == p.dim && forward.noise_dim == p.noise_dim &&
              forward.sigma.rows() == p.sigma.rows() && forward.sigma.cols() == p.sigma.cols() &&
              (forward.sigma - p.sigma).cwiseAbs().maxCoeff() == 0.0,
          ErrorKind::kInvalidArgument, "forward coefficients and control problem disagree on sigma");
  const ControlProblem tp = truncate_hamiltonian(p, truncation);
  CoefficientSet hjb = forward;
  hjb.terminal = p.terminal_cost;
  hjb.driver = [&tp](double t, const LiftedView& x, double, std::span<const double> z) {
    const double l = tp.running_cost ? tp.running_cost(t, x) : 0.0;
    return -(l + hamiltonian(tp, z).value);
  };
  const ForwardEnsemble ens = simulate_forward(hjb, t0, x0, mc);
  const BsdeSolution sol = solve_bsde(ens, hjb, basis, options);
  const double max_z = sol.max_abs_z();
  if (max_z >= truncation) throw ResolveWithLargerM(max_z, truncation);

  HjbResult res;
  res.value = {sol.y0(), sol.y0_std_error(), sol.n_paths};
  res.max_abs_z = max_z;
  res.truncation = truncation;
  res.diagnostics = sol.diagnostics_json();

  PolicyField& pol = res.policy;
  pol.problem = tp;
  pol.basis = basis;
  pol.fits = sol.fits;
  pol.grid = x0.grid();
  pol.start_index = ens.start_index();
  pol.dim = p.dim;
  pol.training_seed = mc.seed;
  pol.value = res.value;
  if (p.control_bound) {
    pol.u_max = 10.0 * *p.control_bound;
  } else {
    pol.u_max = 10.0 * (p.closed_form ? std::max(1.0, 2.0 * max_z)
                                      : std::max(1.0, coercivity_fit(p).radius(max_z)));
  }
  const int n_raw = basis.n_raw(p.dim);
  pol.hull_lo.assign(ens.n_steps(), std::vector<double>(n_raw, std::numeric_limits<double>::infinity()));
  pol.hull_hi.assign(ens.n_steps(), std::vector<double>(n_raw, -std::numeric_limits<double>::infinity()));
  std::vector<double> raw(n_raw);
  for (int k = 0; k < ens.n_steps(); ++k) {
    for (int q = 0; q < ens.n_paths(); ++q) {
      basis.evaluate(ens.state(q, k), raw);
      for (int i = 0; i < n_raw; ++i) {
        pol.hull_lo[k][i] = std::min(pol.hull_lo[k][i], raw[i]);
        pol.hull_hi[k][i] = std::max(pol.hull_hi[k][i], raw[i]);
      }
    }
  }
  return res;
}

HjbResult solve_hjb_adaptive(const ControlProblem& p, double t0, const LiftedView& x0,
                             const CoefficientSet& forward, const NoiseSpec& mc,
                             const RegressionBasis& basis, double initial_truncation,
                             int max_doublings, const BsdeOptions& options) {
  double m = initial_truncation;
  for (int attempt = 0;; ++attempt) {
    try {
      return solve_hjb(p, t0, x0, forward, mc, basis, m, options);
    } catch (const ResolveWithLargerM& e) {
      if (attempt >= max_doublings) throw;
      m = std::max(2.0 * m, 2.0 * e.observed_max_z());
    }
  }
}

FeedbackFn constant_control(std::vector<double> u) {
  return [u = std::move(u)](int, int, const LiftedView&, std::span<double> out) {
    std::copy(u.begin(), u.end(), out.begin());
  };
}

CostRun cost_run(const ControlProblem& p, double t0, const LiftedView& x0, const FeedbackFn& control,
                 const CoefficientSet& forward, const NoiseSpec& mc, double control_bound) {
  require(static_cast<bool>(p.terminal_cost) && static_cast<bool>(p.control_cost),
          ErrorKind::kInvalidArgument, "control problem is incomplete");
  const FeedbackFn checked = [&](int path, int k, const LiftedView& x, std::span<double> u) {
    control(path, k, x, u);
    for (double v : u) {
      if (!std::isfinite(v)) fail(ErrorKind::kUnboundedControl, "control is non-finite");
    }
    if (norm(u) > control_bound) {
      fail(ErrorKind::kUnboundedControl, "control exceeds the admissible bound");
    }
  };
  ForwardEnsemble ens = [&] {
    try {
      return simulate_controlled(forward, t0, x0, mc, checked);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kCoefficientEvaluation) fail(ErrorKind::kUnboundedControl, e.what());
      throw;
    }
  }();
  const double dt = ens.grid().dt();
  CostRun out;
  out.contributions.resize(static_cast<std::size_t>(ens.n_paths()));
  parallel_for(out.contributions.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t pp = b; pp < e; ++pp) {
      const int path = static_cast<int>(pp);
      double c = 0.0;
      for (int k = 0; k < ens.n_steps(); ++k) {
        const double l = p.running_cost ? p.running_cost(ens.time(k), ens.state(path, k)) : 0.0;
        c += dt * (l + p.control_cost(ens.control(path, k)));
      }
      out.contributions[pp] = c + p.terminal_cost(ens.state(path, ens.n_steps()));
    }
  });
  out.estimate = {mean_of(out.contributions), std_error_of(out.contributions), ens.n_paths()};
  return out;
}

ValueEstimate cost(const ControlProblem& p, double t0, const LiftedView& x0, const FeedbackFn& control,
                   const CoefficientSet& forward, const NoiseSpec& mc, double control_bound) {
  return cost_run(p, t0, x0, control, forward, mc, control_bound).estimate;
}

ClosedLoopResult closed_loop(const ControlProblem& p, double t0, const LiftedView& x0,
                             const PolicyField& policy, const CoefficientSet& forward,
                             const NoiseSpec& mc_fresh) {
  require(forward.sigma.cwiseAbs().maxCoeff() > 0.0, ErrorKind::kDegenerateNoise,
          "sigma = 0: the control has no channel into the state");
  require(mc_fresh.seed != policy.training_seed, ErrorKind::kInvalidArgument,
          "closed-loop evaluation needs a seed disjoint from the training seed");
  require(x0.grid().step_of(t0) == policy.start_index, ErrorKind::kInvalidArgument,
          "policy was fitted from a different start time");
  std::vector<int> outside(static_cast<std::size_t>(mc_fresh.n_paths), 0);
  const FeedbackFn feedback = [&](int path, int k, const LiftedView& x, std::span<double> u) {
    if (!policy.in_hull(k, x)) ++outside[path];
    policy.control(k, x, u);
  };
  ForwardEnsemble ens = simulate_controlled(forward, t0, x0, mc_fresh, feedback);
  const double dt = ens.grid().dt();
  std::vector<double> costs(static_cast<std::size_t>(ens.n_paths()));
  for (int path = 0; path < ens.n_paths(); ++path) {
    double c = 0.0;
    for (int k = 0; k < ens.n_steps(); ++k) {
      const double l = p.running_cost ? p.running_cost(ens.time(k), ens.state(path, k)) : 0.0;
      c += dt * (l + p.control_cost(ens.control(path, k)));
    }
    costs[path] = c + p.terminal_cost(ens.state(path, ens.n_steps()));
  }
  long total_outside = 0;
  for (int v : outside) total_outside += v;
  ClosedLoopResult res{std::move(ens), {mean_of(costs), std_error_of(costs), mc_fresh.n_paths}, 0.0};
  res.extrapolation_fraction =
      static_cast<double>(total_outside) / (static_cast<double>(mc_fresh.n_paths) * res.ensemble.n_steps());
  return res;
}

AuditResult fundamental_relation_audit(const ControlProblem& p, double t0, const LiftedView& x0,
                                       const FeedbackFn& control, const PolicyField& policy,
                                       const CoefficientSet& forward, const NoiseSpec& mc) {
  require(x0.grid().step_of(t0) == policy.start_index, ErrorKind::kInvalidArgument,
          "policy was fitted from a different start time");
  const ForwardEnsemble ens = simulate_controlled(forward, t0, x0, mc, control);
  const double dt = ens.grid().dt();
  const int n = ens.n_paths();
  const int d1 = p.noise_dim;
  std::vector<double> gaps(n), costs(n), total(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    std::vector<double> z(d1);
    for (std::size_t pp = b; pp < e; ++pp) {
      const int path = static_cast<int>(pp);
      double g = 0.0, c = 0.0;
      for (int k = 0; k < ens.n_steps(); ++k) {
        const LiftedView x = ens.state(path, k);
        auto u = ens.control(path, k);
        policy.z_hat(k, x, z);
        const double q = p.control_cost(u);
        g += dt * (hamiltonian(policy.problem, z).value - dot(z, u) - q);
        const double l = p.running_cost ? p.running_cost(ens.time(k), x) : 0.0;
        c += dt * (l + q);
      }
      c += p.terminal_cost(ens.state(path, ens.n_steps()));
      gaps[pp] = g;
      costs[pp] = c;
      total[pp] = g + c;
    }
  });
  AuditResult res;
  res.gap = {mean_of(gaps), std_error_of(gaps), n};
  res.cost = {mean_of(costs), std_error_of(costs), n};
  res.v = policy.value.mean;
  res.identity_defect = res.v - res.cost.mean - res.gap.mean;
  const double se_total = std_error_of(total);
  res.identity_std_error = std::sqrt(se_total * se_total + policy.value.std_error * policy.value.std_error);
  return res;
}

}  // namespace pathflow
