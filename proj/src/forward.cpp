#include "pathflow/forward.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include "pathflow/error.hpp"
#include "pathflow/parallel.hpp"

namespace pathflow {
namespace {

// Philox4x32-10 (Salmon et al., SC'11).
using Counter = std::array<std::uint32_t, 4>;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

Counter philox4x32(Counter c, std::uint64_t seed) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  std::uint32_t k0 = static_cast<std::uint32_t>(seed);
  std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kW0;
    k1 += kW1;
  }
  return c;
}

// Uniform on the open interval (0, 1) from 64 random bits.
inline double open_uniform(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline void euler_update(std::span<const double> y, std::span<const double> drift,
                         const Eigen::MatrixXd& sigma, std::span<const double> dw, double dt,
                         std::span<double> out) {
  const auto d = y.size();
  const auto d1 = dw.size();
  for (std::size_t i = 0; i < d; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < d1; ++j) noise += sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * dw[j];
    out[i] = y[i] + drift[i] * dt + noise;
  }
}

void check_finite(std::span<const double> v, int path, int step, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::kCoefficientEvaluation, std::string(what) + " is non-finite at path " +
                                                  std::to_string(path) + ", step " +
                                                  std::to_string(step));
    }
  }
}

void validate_setup(const CoefficientSet& coeffs, const LiftedView& x0, const NoiseSpec& noise) {
  require(x0.grid() == noise.grid, ErrorKind::kGridMismatch, "x0 and noise use different grids");
  require(x0.dim() == coeffs.dim, ErrorKind::kInvalidArgument, "x0 dimension differs from d");
  require(noise.noise_dim == coeffs.noise_dim, ErrorKind::kInvalidArgument,
          "noise dimension differs from d1");
  require(coeffs.sigma.rows() == coeffs.dim && coeffs.sigma.cols() == coeffs.noise_dim,
          ErrorKind::kInvalidArgument, "sigma must be d x d1");
  require(noise.n_paths > 0, ErrorKind::kInvalidArgument, "n_paths must be positive");
}

ForwardEnsemble simulate_impl(const CoefficientSet& coeffs, double t0, const LiftedView& x0,
                              const NoiseSpec& noise, const FeedbackFn* control) {
  validate_setup(coeffs, x0, noise);
  const PathGrid& grid = x0.grid();
  const int start = grid.step_of(t0);
  ForwardEnsemble ens(grid, coeffs.dim, coeffs.noise_dim, start, noise.n_paths);
  if (control) ens.allocate_controls();
  const int d = coeffs.dim;
  const int d1 = coeffs.noise_dim;
  const int steps = ens.n_steps();
  const double dt = grid.dt();

  parallel_for(static_cast<std::size_t>(noise.n_paths), [&](std::size_t begin, std::size_t end) {
    std::vector<double> drift(d), total(d), u(d1);
    for (std::size_t pp = begin; pp < end; ++pp) {
      const int p = static_cast<int>(pp);
      auto hist = ens.history(p);
      std::copy(x0.data().begin(), x0.data().end(), hist.begin());
      auto incs = ens.increments(p);
      for (int k = 0; k < steps; ++k) {
        const LiftedView xk = ens.state(p, k);
        const double tk = ens.time(k);
        auto dw = incs.subspan(static_cast<std::size_t>(k) * d1, d1);
        fill_brownian_increment(noise, p, start + k, dw);
        if (coeffs.drift) {
          coeffs.drift(tk, xk, drift);
          check_finite(drift, p, k, "drift");
        } else {
          std::fill(drift.begin(), drift.end(), 0.0);
        }
        std::copy(drift.begin(), drift.end(), total.begin());
        if (control) {
          (*control)(p, k, xk, u);
          check_finite(u, p, k, "control");
          auto store = ens.controls(p).subspan(static_cast<std::size_t>(k) * d1, d1);
          std::copy(u.begin(), u.end(), store.begin());
          for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d1; ++j) s += coeffs.sigma(i, j) * u[j];
            total[i] += s;
          }
        }
        auto y = xk.present();
        auto next = hist.subspan(static_cast<std::size_t>(grid.n_steps() + k + 1) * d, d);
        euler_update(y, total, coeffs.sigma, dw, dt, next);
        check_finite(next, p, k, "state");
      }
    }
  });
  return ens;
}

double euclid(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 of the combined word.
  std::uint64_t z = seed ^ (tag * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void fill_brownian_increment(const NoiseSpec& noise, int path, int step, std::span<double> out) {
  const double scale = std::sqrt(noise.grid.dt());
  const auto p = static_cast<std::uint64_t>(path);
  for (std::size_t block = 0; 2 * block < out.size(); ++block) {
    const Counter c = philox4x32({static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(block),
                                  static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32)},
                                 noise.seed);
    const double u1 = open_uniform(c[0], c[1]);
    const double u2 = open_uniform(c[2], c[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[2 * block] = scale * r * std::cos(theta);
    if (2 * block + 1 < out.size()) out[2 * block + 1] = scale * r * std::sin(theta);
  }
}

std::vector<double> brownian_increment(const NoiseSpec& noise, int path, int step) {
  require(path >= 0 && path < noise.n_paths, ErrorKind::kIndexOutOfRange, "path index out of range");
  require(step >= 0 && step < noise.grid.n_steps(), ErrorKind::kIndexOutOfRange,
          "step index out of range");
  std::vector<double> out(static_cast<std::size_t>(noise.noise_dim));
  fill_brownian_increment(noise, path, step, out);
  return out;
}

DriftFn lift_path_drift(PathDriftFn b) {
  return [b = std::move(b)](double t, const LiftedView& x, std::span<double> out) {
    b(t, restrict_view(x, x.grid().step_of(t)), out);
  };
}

CoefficientCheck spot_check(const CoefficientSet& coeffs, const PathGrid& grid, int n_probes,
                            std::uint64_t seed) {
  CoefficientCheck report;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> step_dist(0, grid.n_steps() - 1);
  std::vector<double> drift(coeffs.dim), z1(coeffs.noise_dim), z2(coeffs.noise_dim);
  for (int probe = 0; probe < n_probes; ++probe) {
    LiftedState x(grid, coeffs.dim);
    const double scale = std::exp(normal(gen));
    for (double& v : x.data()) v = scale * normal(gen);
    const double t = grid.time_at(step_dist(gen));
    if (coeffs.drift) {
      coeffs.drift(t, x, drift);
      report.max_growth_ratio =
          std::max(report.max_growth_ratio, euclid(drift) / (1.0 + sup_norm(x)));
    }
    if (coeffs.driver) {
      const double y1 = normal(gen), y2 = normal(gen);
      double dz = 0.0;
      for (int j = 0; j < coeffs.noise_dim; ++j) {
        z1[j] = normal(gen);
        z2[j] = normal(gen);
        dz += (z1[j] - z2[j]) * (z1[j] - z2[j]);
      }
      const double gap = std::abs(coeffs.driver(t, x, y1, z1) - coeffs.driver(t, x, y2, z2));
      report.max_driver_lipschitz =
          std::max(report.max_driver_lipschitz, gap / (std::abs(y1 - y2) + std::sqrt(dz)));
    }
  }
  const double slack = 1.0 + 1e-9;
  report.ok = report.max_growth_ratio <= coeffs.lipschitz_c * slack &&
              report.max_driver_lipschitz <= coeffs.lipschitz_c * slack;
  return report;
}

ForwardEnsemble::ForwardEnsemble(const PathGrid& grid, int dim, int noise_dim, int start_index,
                                 int n_paths)
    : grid_(grid),
      dim_(dim),
      noise_dim_(noise_dim),
      start_index_(start_index),
      n_steps_(grid.n_steps() - start_index),
      n_paths_(n_paths) {
  require(start_index >= 0 && start_index <= grid.n_steps(), ErrorKind::kNonGridTime,
          "start index outside the grid");
  history_.assign(history_len() * n_paths_, 0.0);
  increments_.assign(static_cast<std::size_t>(n_steps_) * noise_dim_ * n_paths_, 0.0);
}

LiftedView ForwardEnsemble::state(int path, int k) const {
  const auto d = static_cast<std::size_t>(dim_);
  std::span<const double> h(history_.data() + history_len() * path, history_len());
  return LiftedView(grid_, dim_, h.subspan(k * d, (grid_.n_steps() + 1) * d));
}

PathView ForwardEnsemble::restricted(int path, int k) const {
  return restrict_view(state(path, k), start_index_ + k);
}

std::span<const double> ForwardEnsemble::present(int path, int k) const {
  return state(path, k).present();
}

std::span<const double> ForwardEnsemble::increment(int path, int k) const {
  const auto d1 = static_cast<std::size_t>(noise_dim_);
  return std::span<const double>(increments_).subspan((static_cast<std::size_t>(path) * n_steps_ + k) * d1, d1);
}

std::span<const double> ForwardEnsemble::control(int path, int k) const {
  require(controlled(), ErrorKind::kInvalidArgument, "ensemble has no recorded controls");
  const auto d1 = static_cast<std::size_t>(noise_dim_);
  return std::span<const double>(controls_).subspan((static_cast<std::size_t>(path) * n_steps_ + k) * d1, d1);
}

std::span<double> ForwardEnsemble::history(int path) {
  return std::span<double>(history_).subspan(history_len() * path, history_len());
}

std::span<double> ForwardEnsemble::increments(int path) {
  const auto len = static_cast<std::size_t>(n_steps_) * noise_dim_;
  return std::span<double>(increments_).subspan(len * path, len);
}

std::span<double> ForwardEnsemble::controls(int path) {
  const auto len = static_cast<std::size_t>(n_steps_) * noise_dim_;
  return std::span<double>(controls_).subspan(len * path, len);
}

void ForwardEnsemble::allocate_controls() { controls_.assign(increments_.size(), 0.0); }

ForwardEnsemble simulate_forward(const CoefficientSet& coeffs, double t0, const LiftedView& x0,
                                 const NoiseSpec& noise) {
  return simulate_impl(coeffs, t0, x0, noise, nullptr);
}

ForwardEnsemble simulate_controlled(const CoefficientSet& coeffs, double t0, const LiftedView& x0,
                                    const NoiseSpec& noise, const FeedbackFn& control) {
  require(static_cast<bool>(control), ErrorKind::kInvalidArgument, "control map is empty");
  return simulate_impl(coeffs, t0, x0, noise, &control);
}

std::vector<std::vector<double>> simulate_unlifted(const PathDriftFn& drift,
                                                   const Eigen::MatrixXd& sigma,
                                                   const PathView& gamma, const NoiseSpec& noise) {
  const int d = gamma.dim();
  const int d1 = noise.noise_dim;
  require(sigma.rows() == d && sigma.cols() == d1, ErrorKind::kInvalidArgument,
          "sigma must be d x d1");
  const int start = gamma.last();
  const int steps = noise.grid.n_steps() - start;
  require(steps >= 0, ErrorKind::kGridMismatch, "initial path is longer than the horizon");
  const double dt = noise.grid.dt();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(noise.n_paths));
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> b(d), dw(d1);
    for (std::size_t pp = begin; pp < end; ++pp) {
      const int p = static_cast<int>(pp);
      std::vector<double> path(gamma.data().begin(), gamma.data().end());
      path.resize(static_cast<std::size_t>(start + steps + 1) * d);
      for (int k = 0; k < steps; ++k) {
        const int abs_k = start + k;
        const PathView prefix(d, dt,
                              std::span<const double>(path).first(static_cast<std::size_t>(abs_k + 1) * d));
        drift(noise.grid.time_at(abs_k), prefix, b);
        fill_brownian_increment(noise, p, abs_k, dw);
        std::span<double> next(path.data() + static_cast<std::size_t>(abs_k + 1) * d, d);
        euler_update(prefix.at(abs_k), b, sigma, dw, dt, next);
      }
      out[pp].assign(path.begin() + static_cast<std::ptrdiff_t>(start) * d, path.end());
    }
  });
  return out;
}

VariationalFlow::VariationalFlow(const PathGrid& grid, int dim, int n_steps, int n_paths)
    : grid_(grid), dim_(dim), n_steps_(n_steps), n_paths_(n_paths) {
  history_.assign(static_cast<std::size_t>(grid.n_steps() + n_steps + 1) * dim * n_paths, 0.0);
}

LiftedView VariationalFlow::direction(int path, int k) const {
  const auto d = static_cast<std::size_t>(dim_);
  const std::size_t len = (grid_.n_steps() + n_steps_ + 1) * d;
  std::span<const double> h(history_.data() + len * path, len);
  return LiftedView(grid_, dim_, h.subspan(k * d, (grid_.n_steps() + 1) * d));
}

std::span<double> VariationalFlow::history(int path) {
  const std::size_t len = static_cast<std::size_t>(grid_.n_steps() + n_steps_ + 1) * dim_;
  return std::span<double>(history_).subspan(len * path, len);
}

void drift_directional_derivative(const CoefficientSet& coeffs, double t, const LiftedView& x,
                                  const LiftedView& h, std::span<double> out) {
  if (!coeffs.drift) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (coeffs.drift_derivative) {
    coeffs.drift_derivative(t, x, h, out);
    return;
  }
  const double hn = sup_norm(h);
  if (hn == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  // Perturbation of absolute size 1e-6 (1 + |x|) along h / |h|.
  const double eps = 1e-6 * (1.0 + sup_norm(x)) / hn;
  const LiftedState up = axpy(x, eps, h);
  const LiftedState dn = axpy(x, -eps, h);
  std::vector<double> bu(out.size()), bd(out.size());
  coeffs.drift(t, up, bu);
  coeffs.drift(t, dn, bd);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (bu[i] - bd[i]) / (2.0 * eps);
}

VariationalFlow variational_flow(const CoefficientSet& coeffs, const ForwardEnsemble& ensemble,
                                 const LiftedView& h) {
  require(h.grid() == ensemble.grid() && h.dim() == ensemble.dim(), ErrorKind::kGridMismatch,
          "direction does not match the ensemble");
  const PathGrid& grid = ensemble.grid();
  const int d = ensemble.dim();
  const int steps = ensemble.n_steps();
  const double dt = grid.dt();
  VariationalFlow flow(grid, d, steps, ensemble.n_paths());
  parallel_for(static_cast<std::size_t>(ensemble.n_paths()), [&](std::size_t begin, std::size_t end) {
    std::vector<double> db(d);
    for (std::size_t pp = begin; pp < end; ++pp) {
      const int p = static_cast<int>(pp);
      auto hist = flow.history(p);
      std::copy(h.data().begin(), h.data().end(), hist.begin());
      for (int k = 0; k < steps; ++k) {
        const LiftedView xi = flow.direction(p, k);
        drift_directional_derivative(coeffs, ensemble.time(k), ensemble.state(p, k), xi, db);
        check_finite(db, p, k, "drift derivative");
        auto y = xi.present();
        auto next = hist.subspan(static_cast<std::size_t>(grid.n_steps() + k + 1) * d, d);
        for (int i = 0; i < d; ++i) next[i] = y[i] + db[i] * dt;
      }
    }
  });
  return flow;
}

void write_ensemble_csv(std::ostream& os, const ForwardEnsemble& ensemble) {
  os << "path,step,time";
  for (int i = 0; i < ensemble.dim(); ++i) os << ",x" << (i + 1);
  os << '\n';
  const auto old_precision = os.precision(17);
  for (int p = 0; p < ensemble.n_paths(); ++p) {
    for (int k = 0; k <= ensemble.n_steps(); ++k) {
      os << p << ',' << k << ',' << ensemble.time(k);
      for (double v : ensemble.present(p, k)) os << ',' << v;
      os << '\n';
    }
  }
  os.precision(old_precision);
}

namespace {
constexpr char kEnsembleMagic[8] = {'P', 'F', 'E', 'N', 'S', '0', '0', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), ErrorKind::kFormat, "truncated ensemble snapshot");
  return v;
}
}  // namespace

void write_ensemble_binary(std::ostream& os, const ForwardEnsemble& ensemble) {
  os.write(kEnsembleMagic, sizeof(kEnsembleMagic));
  put<std::int32_t>(os, ensemble.dim());
  put<std::int32_t>(os, ensemble.noise_dim());
  put<std::int32_t>(os, ensemble.grid().n_steps());
  put<std::int32_t>(os, ensemble.start_index());
  put<std::int32_t>(os, ensemble.n_paths());
  put<double>(os, ensemble.grid().horizon());
  for (int p = 0; p < ensemble.n_paths(); ++p) {
    auto x0 = ensemble.state(p, 0).data();
    for (double v : x0) put<double>(os, v);
    for (int k = 1; k <= ensemble.n_steps(); ++k) {
      for (double v : ensemble.present(p, k)) put<double>(os, v);
    }
    for (int k = 0; k < ensemble.n_steps(); ++k) {
      for (double v : ensemble.increment(p, k)) put<double>(os, v);
    }
  }
}

ForwardEnsemble read_ensemble_binary(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  require(static_cast<bool>(is) && std::memcmp(magic, kEnsembleMagic, sizeof(magic)) == 0,
          ErrorKind::kFormat, "not an ensemble snapshot");
  const int d = get<std::int32_t>(is);
  const int d1 = get<std::int32_t>(is);
  const int n = get<std::int32_t>(is);
  const int start = get<std::int32_t>(is);
  const int paths = get<std::int32_t>(is);
  const double horizon = get<double>(is);
  require(d > 0 && d1 > 0 && paths > 0, ErrorKind::kFormat, "invalid snapshot header");
  ForwardEnsemble ens(PathGrid(horizon, n), d, d1, start, paths);
  for (int p = 0; p < paths; ++p) {
    for (double& v : ens.history(p)) v = get<double>(is);
    for (double& v : ens.increments(p)) v = get<double>(is);
  }
  return ens;
}

}  // namespace pathflow
