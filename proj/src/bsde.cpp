#include "pathflow/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Cholesky>

#include "pathflow/error.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/stats.hpp"

namespace pathflow {
namespace {

double eval_driver(const StepDriver& driver, int p, int k, double y, std::span<const double> z) {
  double g;
  try {
    g = driver(p, k, y, z);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::kDriverEvaluation, e.what());
  }
  if (!std::isfinite(g)) {
    fail(ErrorKind::kDriverEvaluation,
         "driver is non-finite at path " + std::to_string(p) + ", step " + std::to_string(k));
  }
  return g;
}

double safe_terminal(const TerminalFn& phi, const LiftedView& x) {
  const double v = phi(x);
  require(std::isfinite(v), ErrorKind::kCoefficientEvaluation, "terminal value is non-finite");
  return v;
}

}  // namespace

double BsdeSolution::y0_std_error() const { return std_error_of(contributions); }

double BsdeSolution::max_abs_z() const {
  double m = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    for (int k = 0; k < n_steps; ++k) {
      double s = 0.0;
      for (double v : z(p, k)) s += v * v;
      m = std::max(m, std::sqrt(s));
    }
  }
  return m;
}

void BsdeSolution::field(int k, const LiftedView& x, std::span<double> out) const {
  require(k >= 0 && k < n_steps, ErrorKind::kIndexOutOfRange, "field step out of range");
  std::vector<double> raw(static_cast<std::size_t>(basis.n_raw(x.dim())));
  basis.evaluate(x, raw);
  fits[k].model.predict(raw, out);
}

nlohmann::json BsdeSolution::diagnostics_json() const {
  nlohmann::json steps = nlohmann::json::array();
  for (int k = 0; k < n_steps; ++k) {
    const auto& d = fits[k].diagnostics;
    steps.push_back({{"step", k},
                     {"time", time(k)},
                     {"n_samples", d.n_samples},
                     {"n_basis", d.n_basis},
                     {"condition_number", d.condition_number},
                     {"r_squared", d.r_squared}});
  }
  return nlohmann::json{{"scheme", scheme == BsdeScheme::kExplicit ? "explicit" : "picard"},
                        {"picard_iterations", picard_iterations},
                        {"martingale_correction", martingale_correction},
                        {"y0", y0()},
                        {"y0_std_error", y0_std_error()},
                        {"max_abs_z", max_abs_z()},
                        {"steps", steps}};
}

BsdeSolution backward_regression(const ForwardEnsemble& ensemble, std::vector<double> terminal,
                                 const StepDriver& driver, const RegressionBasis& basis,
                                 const BsdeOptions& options) {
  const int n = ensemble.n_paths();
  const int K = ensemble.n_steps();
  const int d1 = ensemble.noise_dim();
  const double dt = ensemble.grid().dt();
  require(static_cast<int>(terminal.size()) == n, ErrorKind::kInvalidArgument,
          "terminal values must have one entry per path");
  require(options.picard_iterations >= 1 || options.scheme == BsdeScheme::kExplicit,
          ErrorKind::kInvalidArgument, "picard scheme needs at least one iteration");

  BsdeSolution sol;
  sol.grid = ensemble.grid();
  sol.start_index = ensemble.start_index();
  sol.n_paths = n;
  sol.n_steps = K;
  sol.noise_dim = d1;
  sol.scheme = options.scheme;
  sol.picard_iterations = options.scheme == BsdeScheme::kPicard ? options.picard_iterations : 0;
  sol.martingale_correction = options.martingale_correction;
  sol.basis = basis;
  sol.y_values.assign(static_cast<std::size_t>(n) * (K + 1), 0.0);
  sol.z_values.assign(static_cast<std::size_t>(n) * K * d1, 0.0);
  sol.driver_values.assign(static_cast<std::size_t>(n) * K, 0.0);
  sol.fits.resize(K);
  sol.contributions = terminal;
  for (int p = 0; p < n; ++p) sol.y_values[static_cast<std::size_t>(p) * (K + 1) + K] = terminal[p];

  const int n_raw = basis.n_raw(ensemble.dim());
  Eigen::MatrixXd raw(n, n_raw);
  Eigen::VectorXd y_next(n), yhat(n);
  Eigen::MatrixXd zt(n, d1), z(n, d1);

  for (int k = K - 1; k >= 0; --k) {
    for (int p = 0; p < n; ++p) y_next(p) = sol.y(p, k + 1);
    Eigen::MatrixXd dw(n, d1);
    for (int p = 0; p < n; ++p) {
      auto inc = ensemble.increment(p, k);
      for (int j = 0; j < d1; ++j) dw(p, j) = inc[j];
    }
    StepFit& fit = sol.fits[k];
    if (k == 0) {
      // All paths start from the same state: conditional expectations are plain means.
      // Z is the least-squares slope of Y_1 on dW_0, which normalises by the sample
      // covariance of the increments instead of dt.
      const double ybar = mean_of(std::span<const double>(y_next.data(), n));
      std::vector<double> zbar(d1), col(n), values(1 + d1), wbar(d1);
      for (int j = 0; j < d1; ++j) {
        for (int p = 0; p < n; ++p) col[p] = dw(p, j);
        wbar[j] = mean_of(col);
      }
      Eigen::MatrixXd cww(d1, d1);
      Eigen::VectorXd cwy(d1);
      for (int i = 0; i < d1; ++i) {
        for (int p = 0; p < n; ++p) col[p] = (y_next(p) - ybar) * (dw(p, i) - wbar[i]);
        cwy(i) = mean_of(col);
        for (int j = 0; j <= i; ++j) {
          for (int p = 0; p < n; ++p) col[p] = (dw(p, i) - wbar[i]) * (dw(p, j) - wbar[j]);
          cww(i, j) = cww(j, i) = mean_of(col);
        }
      }
      const Eigen::VectorXd zsol = cww.ldlt().solve(cwy);
      for (int j = 0; j < d1; ++j) zbar[j] = zsol(j);
      double yb = ybar;
      if (options.martingale_correction) {
        for (int p = 0; p < n; ++p) {
          double m = 0.0;
          for (int j = 0; j < d1; ++j) m += zbar[j] * dw(p, j);
          col[p] = y_next(p) - m;
        }
        yb = mean_of(col);
      }
      values[0] = yb;
      std::copy(zbar.begin(), zbar.end(), values.begin() + 1);
      fit.model = RegressionModel::constant(values);
      fit.diagnostics.n_samples = n;
      fit.diagnostics.n_basis = 1;
      fit.diagnostics.r_squared.assign(1 + d1, 0.0);
      yhat.setConstant(yb);
      for (int p = 0; p < n; ++p) z.row(p) = Eigen::Map<const Eigen::RowVectorXd>(zbar.data(), d1);
    } else {
      parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
        std::vector<double> row(n_raw);
        for (std::size_t p = b; p < e; ++p) {
          basis.evaluate(ensemble.state(static_cast<int>(p), k), row);
          for (int c = 0; c < n_raw; ++c) raw(static_cast<Eigen::Index>(p), c) = row[c];
        }
      });
      try {
        LeastSquares ls(raw, basis.degree, basis.ridge_lambda);
        const Eigen::MatrixXd cy = ls.solve(y_next);
        yhat = ls.fitted(cy).col(0);
        for (int j = 0; j < d1; ++j) zt.col(j) = (y_next - yhat).cwiseProduct(dw.col(j));
        const Eigen::MatrixXd cz = ls.solve(zt) / dt;
        z = ls.fitted(cz);
        Eigen::MatrixXd coef(ls.n_basis(), 1 + d1);
        coef.col(0) = cy.col(0);
        coef.rightCols(d1) = cz;
        Eigen::VectorXd y_target = y_next;
        if (options.martingale_correction) {
          for (int p = 0; p < n; ++p) y_target(p) -= z.row(p).dot(dw.row(p));
          const Eigen::MatrixXd ccv = ls.solve(y_target);
          yhat = ls.fitted(ccv).col(0);
          coef.col(0) = ccv.col(0);
        }
        fit.model = ls.model(coef);
        fit.diagnostics.n_samples = n;
        fit.diagnostics.n_basis = ls.n_basis();
        fit.diagnostics.condition_number = ls.condition_number();
        const auto r2 = [](const Eigen::VectorXd& target, const Eigen::VectorXd& fitted) {
          const double m = target.mean();
          const double tot = (target.array() - m).square().sum();
          return tot > 0.0 ? 1.0 - (target - fitted).squaredNorm() / tot : 1.0;
        };
        fit.diagnostics.r_squared.push_back(r2(y_target, yhat));
        for (int j = 0; j < d1; ++j) {
          fit.diagnostics.r_squared.push_back(r2(zt.col(j), z.col(j) * dt));
        }
      } catch (const Error& e) {
        throw RegressionFailure(k, e.what());
      }
    }

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
      std::vector<double> zp(d1);
      for (std::size_t pp = b; pp < e; ++pp) {
        const int p = static_cast<int>(pp);
        for (int j = 0; j < d1; ++j) zp[j] = z(p, j);
        double yk = yhat(p);
        double g = 0.0;
        if (driver) {
          g = eval_driver(driver, p, k, yk, zp);
          if (options.scheme == BsdeScheme::kPicard) {
            for (int it = 0; it < options.picard_iterations; ++it) {
              yk = yhat(p) - dt * g;
              g = eval_driver(driver, p, k, yk, zp);
            }
          }
        }
        yk = yhat(p) - dt * g;
        sol.y_values[pp * (K + 1) + k] = yk;
        sol.driver_values[pp * K + k] = g;
        std::copy(zp.begin(), zp.end(), sol.z_values.begin() + static_cast<std::ptrdiff_t>((pp * K + k) * d1));
        sol.contributions[pp] -= dt * g;
        if (options.martingale_correction) {
          double m = 0.0;
          for (int j = 0; j < d1; ++j) m += zp[j] * dw(p, j);
          sol.contributions[pp] -= m;
        }
      }
    });
  }
  return sol;
}

BsdeSolution solve_bsde(const ForwardEnsemble& ensemble, const CoefficientSet& coeffs,
                        const RegressionBasis& basis, const BsdeOptions& options) {
  require(static_cast<bool>(coeffs.terminal), ErrorKind::kInvalidArgument,
          "terminal condition is missing");
  const int n = ensemble.n_paths();
  const int K = ensemble.n_steps();
  std::vector<double> terminal(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      terminal[p] = safe_terminal(coeffs.terminal, ensemble.state(static_cast<int>(p), K));
    }
  });
  StepDriver driver;
  if (coeffs.driver) {
    driver = [&](int p, int k, double y, std::span<const double> z) {
      return coeffs.driver(ensemble.time(k), ensemble.state(p, k), y, z);
    };
  }
  return backward_regression(ensemble, std::move(terminal), driver, basis, options);
}

BsdeSolution solve_first_derivative_bsde(const ForwardEnsemble& ensemble,
                                         const CoefficientSet& coeffs, const VariationalFlow& flow,
                                         const BsdeSolution& base, const RegressionBasis& basis,
                                         const BsdeOptions& options) {
  require(flow.n_paths() == ensemble.n_paths() && base.n_paths == ensemble.n_paths() &&
              flow.n_steps() == ensemble.n_steps() && base.n_steps == ensemble.n_steps(),
          ErrorKind::kGridMismatch, "flow, base solution and ensemble do not match");
  const int n = ensemble.n_paths();
  const int K = ensemble.n_steps();
  const int d1 = ensemble.noise_dim();

  std::vector<double> terminal(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    for (std::size_t pp = b; pp < e; ++pp) {
      const int p = static_cast<int>(pp);
      const LiftedView x = ensemble.state(p, K);
      const LiftedView xi = flow.direction(p, K);
      if (coeffs.terminal_derivative) {
        terminal[pp] = coeffs.terminal_derivative(x, xi);
      } else {
        const double hn = sup_norm(xi);
        if (hn == 0.0) {
          terminal[pp] = 0.0;
          continue;
        }
        const double eps = 1e-6 * (1.0 + sup_norm(x)) / hn;
        terminal[pp] = (coeffs.terminal(axpy(x, eps, xi)) - coeffs.terminal(axpy(x, -eps, xi))) /
                       (2.0 * eps);
      }
    }
  });

  StepDriver driver;
  if (coeffs.driver) {
    driver = [&](int p, int k, double dy, std::span<const double> dz) {
      const double t = ensemble.time(k);
      const LiftedView x = ensemble.state(p, k);
      const LiftedView xi = flow.direction(p, k);
      const double y = base.y(p, k);
      auto zb = base.z(p, k);
      std::vector<double> z(zb.begin(), zb.end());
      double gx = 0.0;
      const double hn = sup_norm(xi);
      if (hn > 0.0) {
        const double ex = 1e-6 * (1.0 + sup_norm(x)) / hn;
        gx = (coeffs.driver(t, axpy(x, ex, xi), y, z) - coeffs.driver(t, axpy(x, -ex, xi), y, z)) /
             (2.0 * ex);
      }
      const double ey = 1e-6 * (1.0 + std::abs(y));
      const double gy =
          (coeffs.driver(t, x, y + ey, z) - coeffs.driver(t, x, y - ey, z)) / (2.0 * ey);
      double gz = 0.0;
      for (int j = 0; j < d1; ++j) {
        const double ez = 1e-6 * (1.0 + std::abs(z[j]));
        const double zj = z[j];
        z[j] = zj + ez;
        const double up = coeffs.driver(t, x, y, z);
        z[j] = zj - ez;
        const double dn = coeffs.driver(t, x, y, z);
        z[j] = zj;
        gz += (up - dn) / (2.0 * ez) * dz[j];
      }
      return gx + gy * dy + gz;
    };
  }
  return backward_regression(ensemble, std::move(terminal), driver, basis, options);
}

void write_bsde_csv(std::ostream& os, const BsdeSolution& s) {
  os << "path,step,time,Y";
  for (int j = 0; j < s.noise_dim; ++j) os << ",Z" << (j + 1);
  os << '\n';
  const auto old = os.precision(17);
  for (int p = 0; p < s.n_paths; ++p) {
    for (int k = 0; k <= s.n_steps; ++k) {
      os << p << ',' << k << ',' << s.time(k) << ',' << s.y(p, k);
      for (int j = 0; j < s.noise_dim; ++j) {
        os << ',';
        if (k < s.n_steps) os << s.z(p, k)[j];
      }
      os << '\n';
    }
  }
  os.precision(old);
}

LinearBsdeSpec LinearBsdeSpec::constant(double a, std::vector<double> b, double c, double eta,
                                        double horizon) {
  LinearBsdeSpec s;
  s.horizon = horizon;
  s.noise_dim = static_cast<int>(b.size());
  s.a = [a](double, std::span<const double>) { return a; };
  s.b = [b](double, std::span<const double>, std::span<double> out) {
    std::copy(b.begin(), b.end(), out.begin());
  };
  s.c = [c](double, std::span<const double>) { return c; };
  s.eta = [eta](std::span<const double>) { return eta; };
  s.deterministic = true;
  double bn = 0.0;
  for (double v : b) bn += v * v;
  s.a_bound = std::abs(a);
  s.b_bound = std::sqrt(bn);
  return s;
}

DriverFn linear_driver(double a, std::vector<double> b, double c) {
  return [a, b = std::move(b), c](double, const LiftedView&, double y, std::span<const double> z) {
    double bz = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) bz += b[j] * z[j];
    return -(a * y + bz + c);
  };
}

LinearBsdeResult linear_bsde_closed_form(const LinearBsdeSpec& spec, const NoiseSpec& noise,
                                         LinearOracleMode mode) {
  require(spec.a && spec.b && spec.c && spec.eta, ErrorKind::kInvalidArgument,
          "linear BSDE spec is incomplete");
  require(spec.noise_dim == noise.noise_dim, ErrorKind::kInvalidArgument,
          "noise dimension mismatch");
  require(std::abs(spec.horizon - noise.grid.horizon()) <= 1e-12 * spec.horizon,
          ErrorKind::kGridMismatch, "horizon differs from the noise grid");
  require(mode != LinearOracleMode::kExact || spec.deterministic, ErrorKind::kInvalidArgument,
          "exact mode needs deterministic coefficients");
  const int n = noise.n_paths;
  const int N = noise.grid.n_steps();
  const int d1 = noise.noise_dim;
  const double dt = noise.grid.dt();
  const double slack = 1.0 + 1e-12;

  LinearBsdeResult res;
  res.n_paths = n;
  res.n_steps = N;
  res.gamma.assign(static_cast<std::size_t>(n) * (N + 1), 1.0);
  res.weight_v.assign(static_cast<std::size_t>(n) * (N + 1), 0.0);
  res.contributions.assign(n, 0.0);

  // Pathwise W, Gamma by log-Euler, V, and the coefficient samples needed downstream.
  std::vector<double> w_hist(static_cast<std::size_t>(n) * (N + 1) * d1, 0.0);
  std::vector<double> a_hist(static_cast<std::size_t>(n) * N), c_hist(a_hist.size()),
      bn_hist(a_hist.size());
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b0, std::size_t e0) {
    std::vector<double> dw(d1), bv(d1);
    for (std::size_t pp = b0; pp < e0; ++pp) {
      const int p = static_cast<int>(pp);
      double log_gamma = 0.0;
      for (int k = 0; k < N; ++k) {
        const double t = noise.grid.time_at(k);
        std::span<const double> w(w_hist.data() + (pp * (N + 1) + k) * d1, d1);
        const double ak = spec.a(t, w);
        spec.b(t, w, bv);
        const double ck = spec.c(t, w);
        double b2 = 0.0, bdw = 0.0;
        fill_brownian_increment(noise, p, k, dw);
        for (int j = 0; j < d1; ++j) {
          b2 += bv[j] * bv[j];
          bdw += bv[j] * dw[j];
        }
        if (std::abs(ak) > spec.a_bound * slack || std::sqrt(b2) > spec.b_bound * slack) {
          fail(ErrorKind::kUnboundedCoefficient,
               "coefficient exceeds its declared bound at step " + std::to_string(k));
        }
        const std::size_t idx = pp * N + k;
        a_hist[idx] = ak;
        c_hist[idx] = ck;
        bn_hist[idx] = std::sqrt(b2);
        log_gamma += (ak - 0.5 * b2) * dt + bdw;
        const std::size_t at = pp * (N + 1) + k;
        res.gamma[at + 1] = std::exp(log_gamma);
        res.weight_v[at + 1] = res.weight_v[at] + (std::abs(ak) + b2) * dt;
        for (int j = 0; j < d1; ++j) w_hist[(at + 1) * d1 + j] = w_hist[at * d1 + j] + dw[j];
      }
    }
  });
  const auto w_at = [&](int p, int k) {
    return std::span<const double>(w_hist.data() + (static_cast<std::size_t>(p) * (N + 1) + k) * d1, d1);
  };
  const auto gamma_at = [&](int p, int k) { return res.gamma[static_cast<std::size_t>(p) * (N + 1) + k]; };

  // S_k = Gamma_N eta + sum_{j >= k} Gamma_j c_j dt, per path.
  std::vector<double> s_tail(static_cast<std::size_t>(n) * (N + 1));
  for (int p = 0; p < n; ++p) {
    double s = gamma_at(p, N) * spec.eta(w_at(p, N));
    s_tail[static_cast<std::size_t>(p) * (N + 1) + N] = s;
    for (int k = N - 1; k >= 0; --k) {
      s += gamma_at(p, k) * c_hist[static_cast<std::size_t>(p) * N + k] * dt;
      s_tail[static_cast<std::size_t>(p) * (N + 1) + k] = s;
    }
    res.contributions[p] = s_tail[static_cast<std::size_t>(p) * (N + 1)];
  }

  if (mode == LinearOracleMode::kMonteCarlo) {
    res.y0 = mean_of(res.contributions);
    res.y0_std_error = std_error_of(res.contributions);
    return res;
  }

  res.y_values.assign(static_cast<std::size_t>(n) * (N + 1), 0.0);
  if (mode == LinearOracleMode::kExact) {
    // Y_t = exp(int_t^T a) eta + int_t^T exp(int_t^s a) c_s ds by composite Simpson.
    constexpr int kSub = 64;
    const std::vector<double> w0(d1, 0.0);
    const auto a_of = [&](double t) { return spec.a(t, w0); };
    const auto c_of = [&](double t) { return spec.c(t, w0); };
    const double eta = spec.eta(w0);
    std::vector<double> y(N + 1);
    y[N] = eta;
    for (int k = N - 1; k >= 0; --k) {
      // Over [t_k, t_{k+1}]: Y_k = e^{A} Y_{k+1} + int e^{int_{t_k}^s a} c ds.
      const double t0 = noise.grid.time_at(k);
      const double h = dt / kSub;
      double int_a = 0.0, int_c = 0.0;
      double prev_a = a_of(t0);
      double prev_f = c_of(t0);
      for (int i = 0; i < kSub; ++i) {
        const double ta = t0 + i * h, tm = ta + 0.5 * h, tb = ta + h;
        const double am = a_of(tm), ab = a_of(tb);
        const double a_mid = int_a + h * (5.0 * prev_a + 8.0 * am - ab) / 24.0;
        const double a_end = int_a + h * (prev_a + 4.0 * am + ab) / 6.0;
        const double fm = std::exp(a_mid) * c_of(tm);
        const double fb = std::exp(a_end) * c_of(tb);
        int_c += h * (prev_f + 4.0 * fm + fb) / 6.0;
        int_a = a_end;
        prev_a = ab;
        prev_f = fb;
      }
      y[k] = std::exp(int_a) * y[k + 1] + int_c;
    }
    for (int p = 0; p < n; ++p) {
      std::copy(y.begin(), y.end(), res.y_values.begin() + static_cast<std::ptrdiff_t>(p) * (N + 1));
    }
    res.y0 = y[0];
    res.y0_std_error = 0.0;
    return res;
  }

  // Nested regression: Y_k = E[S_k / Gamma_k | W_k, a_k, |b_k|, c_k].
  for (int p = 0; p < n; ++p) res.y_values[static_cast<std::size_t>(p) * (N + 1) + N] = spec.eta(w_at(p, N));
  const int n_raw = d1 + 3;
  Eigen::MatrixXd raw(n, n_raw);
  Eigen::VectorXd target(n);
  for (int k = N - 1; k >= 1; --k) {
    for (int p = 0; p < n; ++p) {
      auto w = w_at(p, k);
      for (int j = 0; j < d1; ++j) raw(p, j) = w[j];
      const std::size_t idx = static_cast<std::size_t>(p) * N + k;
      raw(p, d1) = a_hist[idx];
      raw(p, d1 + 1) = bn_hist[idx];
      raw(p, d1 + 2) = c_hist[idx];
      target(p) = s_tail[static_cast<std::size_t>(p) * (N + 1) + k] / gamma_at(p, k);
    }
    RegressionResult fit;
    try {
      fit = regress(raw, target, 2, 1e-8);
    } catch (const Error& e) {
      throw RegressionFailure(k, e.what());
    }
    for (int p = 0; p < n; ++p) res.y_values[static_cast<std::size_t>(p) * (N + 1) + k] = fit.fitted(p, 0);
  }
  res.y0 = mean_of(res.contributions);
  res.y0_std_error = std_error_of(res.contributions);
  for (int p = 0; p < n; ++p) res.y_values[static_cast<std::size_t>(p) * (N + 1)] = res.y0;
  return res;
}

}  // namespace pathflow
