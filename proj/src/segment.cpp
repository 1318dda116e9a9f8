#include "pathflow/segment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pathflow/error.hpp"

namespace pathflow {
namespace {

double euclid(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_same_shape(const LiftedView& a, const LiftedView& b) {
  require(a.grid() == b.grid() && a.dim() == b.dim(), ErrorKind::kGridMismatch,
          "lifted states live on different grids");
}

}  // namespace

PathGrid::PathGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
  require(std::isfinite(horizon) && horizon > 0.0, ErrorKind::kInvalidArgument,
          "horizon must be positive");
  require(n_steps >= 2, ErrorKind::kInvalidArgument, "grid needs at least 2 steps");
}

int PathGrid::step_of(double t) const {
  const double k_real = t / dt();
  const long k = std::lround(k_real);
  if (!std::isfinite(t) || k < 0 || k > n_steps_ ||
      std::abs(t - time_at(static_cast<int>(k))) > 1e-9 * std::max(1.0, horizon_)) {
    fail(ErrorKind::kNonGridTime, "t = " + std::to_string(t) + " is not a grid time");
  }
  return static_cast<int>(k);
}

LiftedView::LiftedView(const PathGrid& grid, int dim, std::span<const double> data)
    : grid_(grid), dim_(dim), data_(data) {
  require(dim > 0, ErrorKind::kInvalidArgument, "dimension must be positive");
  require(data.size() == static_cast<std::size_t>(grid.n_steps() + 1) * dim,
          ErrorKind::kGridMismatch, "state storage does not match grid");
}

std::span<const double> LiftedView::past_at(double r) const {
  const int n = grid_.n_steps();
  int j = static_cast<int>(std::floor((r + grid_.horizon()) / grid_.dt()));
  j = std::clamp(j, 0, n - 1);
  return past(j);
}

LiftedState::LiftedState(const PathGrid& grid, int dim)
    : grid_(grid), dim_(dim), data_(static_cast<std::size_t>(grid.n_steps() + 1) * dim, 0.0) {
  require(dim > 0, ErrorKind::kInvalidArgument, "dimension must be positive");
}

LiftedState::LiftedState(const PathGrid& grid, std::span<const double> present,
                         std::span<const double> past)
    : grid_(grid), dim_(static_cast<int>(present.size())) {
  require(dim_ > 0, ErrorKind::kInvalidArgument, "dimension must be positive");
  require(past.size() == static_cast<std::size_t>(grid.n_steps()) * dim_,
          ErrorKind::kGridMismatch, "past must hold N * d samples");
  data_.reserve(past.size() + present.size());
  data_.insert(data_.end(), past.begin(), past.end());
  data_.insert(data_.end(), present.begin(), present.end());
}

LiftedState::LiftedState(const LiftedView& view)
    : grid_(view.grid()), dim_(view.dim()), data_(view.data().begin(), view.data().end()) {}

LiftedState LiftedState::constant(const PathGrid& grid, std::span<const double> value) {
  LiftedState x(grid, static_cast<int>(value.size()));
  for (int j = 0; j <= grid.n_steps(); ++j) {
    std::copy(value.begin(), value.end(), x.data_.begin() + static_cast<std::ptrdiff_t>(j) * x.dim_);
  }
  return x;
}

LiftedState& LiftedState::operator+=(const LiftedView& other) {
  require_same_shape(view(), other);
  auto o = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o[i];
  return *this;
}

LiftedState& LiftedState::operator-=(const LiftedView& other) {
  require_same_shape(view(), other);
  auto o = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o[i];
  return *this;
}

LiftedState& LiftedState::operator*=(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

LiftedState operator+(const LiftedView& a, const LiftedView& b) {
  LiftedState out(a);
  out += b;
  return out;
}

LiftedState operator-(const LiftedView& a, const LiftedView& b) {
  LiftedState out(a);
  out -= b;
  return out;
}

LiftedState operator*(double factor, const LiftedView& x) {
  LiftedState out(x);
  out *= factor;
  return out;
}

LiftedState axpy(const LiftedView& x, double factor, const LiftedView& h) {
  require_same_shape(x, h);
  LiftedState out(x);
  auto hd = h.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = od[i] + factor * hd[i];
  return out;
}

PathView::PathView(int dim, double dt, std::span<const double> data)
    : dim_(dim), dt_(dt), data_(data) {
  require(dim > 0 && !data.empty() && data.size() % dim == 0, ErrorKind::kInvalidArgument,
          "sampled path storage must be a positive multiple of the dimension");
}

SampledPath::SampledPath(int dim, double dt, std::vector<double> samples)
    : dim_(dim), dt_(dt), samples_(std::move(samples)) {
  PathView check(dim_, dt_, samples_);
  (void)check;
}

SampledPath::SampledPath(const PathView& view)
    : dim_(view.dim()), dt_(view.dt()), samples_(view.data().begin(), view.data().end()) {}

PathView restrict_view(const LiftedView& x, int k) {
  const int n = x.grid().n_steps();
  require(k >= 0 && k <= n, ErrorKind::kNonGridTime, "restriction step out of range");
  const auto d = static_cast<std::size_t>(x.dim());
  return PathView(x.dim(), x.grid().dt(), x.data().subspan((n - k) * d));
}

SampledPath restrict(const LiftedView& x, double t) {
  return SampledPath(restrict_view(x, x.grid().step_of(t)));
}

LiftedState extend(const PathView& chi, const PathGrid& grid) {
  const int n = grid.n_steps();
  const int k = chi.last();
  require(std::abs(chi.dt() - grid.dt()) <= 1e-12 * grid.dt(), ErrorKind::kGridMismatch,
          "path sampling step differs from the grid step");
  require(k <= n, ErrorKind::kGridMismatch, "path is longer than the horizon");
  LiftedState x(grid, chi.dim());
  for (int j = 0; j < n; ++j) {
    const int src = j < n - k ? 0 : j - (n - k);
    auto s = chi.at(src);
    std::copy(s.begin(), s.end(), x.past(j).begin());
  }
  auto last = chi.at(k);
  std::copy(last.begin(), last.end(), x.present().begin());
  return x;
}

LiftedState shift_steps(const LiftedView& x, int k) {
  const int n = x.grid().n_steps();
  require(k >= 0 && k <= n, ErrorKind::kNonGridTime, "shift beyond the horizon");
  LiftedState out(x);
  auto y = x.present();
  for (int j = 0; j < n; ++j) {
    auto src = j + k < n ? x.past(j + k) : y;
    std::copy(src.begin(), src.end(), out.past(j).begin());
  }
  return out;
}

LiftedState shift(const LiftedView& x, double t) { return shift_steps(x, x.grid().step_of(t)); }

double sup_norm(const LiftedView& x) {
  double m = euclid(x.present());
  for (int j = 0; j < x.grid().n_steps(); ++j) m = std::max(m, euclid(x.past(j)));
  return m;
}

double l2_norm(const LiftedView& x) {
  double past_sq = 0.0;
  for (int j = 0; j < x.grid().n_steps(); ++j) {
    const double e = euclid(x.past(j));
    past_sq += e * e;
  }
  const double p = euclid(x.present());
  return std::sqrt(p * p + x.grid().dt() * past_sq);
}

bool is_continuous_compatible(const LiftedView& x) {
  const double tol = 1e-12 * (1.0 + sup_norm(x));
  auto y = x.present();
  auto last = x.past(x.grid().n_steps() - 1);
  for (int i = 0; i < x.dim(); ++i) {
    if (std::abs(y[i] - last[i]) > tol) return false;
  }
  return true;
}

ProfileSample sample_profile(const SmoothProfile& profile, const PathGrid& grid) {
  require(profile.value && profile.derivative && profile.dim > 0, ErrorKind::kInvalidArgument,
          "profile needs value and derivative maps");
  const double horizon = grid.horizon();
  const auto check_dim = [&](const std::vector<double>& v) {
    require(static_cast<int>(v.size()) == profile.dim, ErrorKind::kProfileInconsistent,
            "profile returned a vector of the wrong dimension");
  };
  // Derivative spot check at 5 interior points (fixed stream so the check is reproducible).
  std::mt19937_64 gen(0x5eed);
  std::uniform_real_distribution<double> unif(-0.95 * horizon, -0.05 * horizon);
  const double h = 1e-5 * std::max(1.0, horizon);
  for (int trial = 0; trial < 5; ++trial) {
    const double r = unif(gen);
    auto up = profile.value(r + h);
    auto dn = profile.value(r - h);
    auto d = profile.derivative(r);
    check_dim(up);
    check_dim(dn);
    check_dim(d);
    for (int i = 0; i < profile.dim; ++i) {
      const double fd = (up[i] - dn[i]) / (2.0 * h);
      if (std::abs(fd - d[i]) > 1e-4 * std::max(1.0, std::abs(d[i]))) {
        fail(ErrorKind::kProfileInconsistent,
             "derivative disagrees with finite differences at r = " + std::to_string(r));
      }
    }
  }
  ProfileSample out{LiftedState(grid, profile.dim), LiftedState(grid, profile.dim)};
  for (int j = 0; j < grid.n_steps(); ++j) {
    const double r = grid.past_time(j);
    auto v = profile.value(r);
    auto d = profile.derivative(r);
    check_dim(v);
    check_dim(d);
    std::copy(v.begin(), v.end(), out.state.past(j).begin());
    std::copy(d.begin(), d.end(), out.direction.past(j).begin());
  }
  auto v0 = profile.value(0.0);
  check_dim(v0);
  std::copy(v0.begin(), v0.end(), out.state.present().begin());
  return out;
}

nlohmann::json to_json(const LiftedView& x) {
  auto present = x.present();
  auto past = x.past_block();
  return nlohmann::json{{"d", x.dim()},
                        {"N", x.grid().n_steps()},
                        {"T", x.grid().horizon()},
                        {"present", std::vector<double>(present.begin(), present.end())},
                        {"past", std::vector<double>(past.begin(), past.end())}};
}

LiftedState lifted_state_from_json(const nlohmann::json& j) {
  try {
    const int d = j.at("d").get<int>();
    const int n = j.at("N").get<int>();
    const double horizon = j.at("T").get<double>();
    auto present = j.at("present").get<std::vector<double>>();
    auto past = j.at("past").get<std::vector<double>>();
    require(static_cast<int>(present.size()) == d, ErrorKind::kFormat, "present has wrong size");
    require(past.size() == static_cast<std::size_t>(n) * d, ErrorKind::kFormat,
            "past has wrong size");
    for (double v : present) require(std::isfinite(v), ErrorKind::kFormat, "non-finite entry");
    for (double v : past) require(std::isfinite(v), ErrorKind::kFormat, "non-finite entry");
    return LiftedState(PathGrid(horizon, n), present, past);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, e.what());
  }
}

}  // namespace pathflow
