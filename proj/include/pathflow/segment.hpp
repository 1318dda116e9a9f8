#pragma once

// Discretized product space R^d x D([-T,0); R^d) and the exact operators acting on it:
// restriction M_t, backward extension L^t and the delay semigroup e^{tA}.
//
// Storage convention: a lifted state with N past samples in dimension d is a contiguous
// block of (N + 1) * d doubles, past samples first (r_j = -T + j dt, j = 0..N-1, each
// sample holding the value on [r_j, r_j + dt)), present value last. With this layout the
// restriction M_t x is a tail of the block, and consecutive states of a simulated path
// are overlapping windows of one history buffer.

#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace pathflow {

class PathGrid {
 public:
  PathGrid(double horizon, int n_steps);

  double horizon() const noexcept { return horizon_; }
  int n_steps() const noexcept { return n_steps_; }
  double dt() const noexcept { return horizon_ / n_steps_; }

  /// Forward time of step k, exact at k = N.
  double time_at(int k) const noexcept { return horizon_ * k / n_steps_; }
  /// Past grid point r_j = -T + j dt.
  double past_time(int j) const noexcept { return -horizon_ + horizon_ * j / n_steps_; }

  /// Index k with time_at(k) == t; throws NonGridTime otherwise (0 <= k <= N).
  int step_of(double t) const;

  bool operator==(const PathGrid&) const = default;

 private:
  double horizon_;
  int n_steps_;
};

/// Non-owning view of a lifted state.
class LiftedView {
 public:
  LiftedView(const PathGrid& grid, int dim, std::span<const double> data);

  const PathGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<const double> present() const noexcept {
    return data_.subspan(static_cast<std::size_t>(grid_.n_steps()) * dim_, dim_);
  }
  std::span<const double> past(int j) const noexcept {
    return data_.subspan(static_cast<std::size_t>(j) * dim_, dim_);
  }
  std::span<const double> past_block() const noexcept {
    return data_.first(static_cast<std::size_t>(grid_.n_steps()) * dim_);
  }
  /// Piecewise-constant (right-continuous) evaluation of the past at r in [-T, 0).
  std::span<const double> past_at(double r) const;

 private:
  PathGrid grid_;
  int dim_;
  std::span<const double> data_;
};

class LiftedState {
 public:
  /// Zero state.
  LiftedState(const PathGrid& grid, int dim);
  /// past holds N * d values (sample-major), present d values.
  LiftedState(const PathGrid& grid, std::span<const double> present, std::span<const double> past);
  explicit LiftedState(const LiftedView& view);

  static LiftedState constant(const PathGrid& grid, std::span<const double> value);

  const PathGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }

  LiftedView view() const { return LiftedView(grid_, dim_, data_); }
  operator LiftedView() const { return view(); }  // NOLINT(google-explicit-constructor)

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> present() const noexcept { return view().present(); }
  std::span<double> present() noexcept {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(grid_.n_steps()) * dim_,
                                            dim_);
  }
  std::span<const double> past(int j) const noexcept { return view().past(j); }
  std::span<double> past(int j) noexcept {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(j) * dim_, dim_);
  }

  LiftedState& operator+=(const LiftedView& other);
  LiftedState& operator-=(const LiftedView& other);
  LiftedState& operator*=(double factor);

  bool operator==(const LiftedState& other) const {
    return grid_ == other.grid_ && dim_ == other.dim_ && data_ == other.data_;
  }

 private:
  PathGrid grid_;
  int dim_;
  std::vector<double> data_;
};

LiftedState operator+(const LiftedView& a, const LiftedView& b);
LiftedState operator-(const LiftedView& a, const LiftedView& b);
LiftedState operator*(double factor, const LiftedView& x);
/// x + factor * h, the stencil primitive. Evaluated as x[i] + (factor * h[i]).
LiftedState axpy(const LiftedView& x, double factor, const LiftedView& h);

/// Non-owning view of a sampled path on [0, t_end] (samples at 0, dt, ..., t_end).
class PathView {
 public:
  PathView(int dim, double dt, std::span<const double> data);

  int dim() const noexcept { return dim_; }
  double dt() const noexcept { return dt_; }
  /// Index of the last sample (t_end / dt).
  int last() const noexcept { return n_samples() - 1; }
  int n_samples() const noexcept { return static_cast<int>(data_.size()) / dim_; }
  double t_end() const noexcept { return dt_ * last(); }
  std::span<const double> at(int i) const noexcept {
    return data_.subspan(static_cast<std::size_t>(i) * dim_, dim_);
  }
  std::span<const double> data() const noexcept { return data_; }

 private:
  int dim_;
  double dt_;
  std::span<const double> data_;
};

class SampledPath {
 public:
  SampledPath(int dim, double dt, std::vector<double> samples);
  explicit SampledPath(const PathView& view);

  PathView view() const { return PathView(dim_, dt_, samples_); }
  operator PathView() const { return view(); }  // NOLINT(google-explicit-constructor)
  int n_samples() const noexcept { return static_cast<int>(samples_.size()) / dim_; }
  std::span<const double> at(int i) const noexcept { return view().at(i); }
  bool operator==(const SampledPath&) const = default;

 private:
  int dim_;
  double dt_;
  std::vector<double> samples_;
};

/// Zero-copy M_{t_k} x: the restricted path as a view into x's storage.
PathView restrict_view(const LiftedView& x, int k);
/// M_t x for grid time t.
SampledPath restrict(const LiftedView& x, double t);
/// L^t chi; t = chi.t_end().
LiftedState extend(const PathView& chi, const PathGrid& grid);
/// e^{tA} x for grid time t.
LiftedState shift(const LiftedView& x, double t);
LiftedState shift_steps(const LiftedView& x, int k);

double sup_norm(const LiftedView& x);
double l2_norm(const LiftedView& x);

/// Discrete C-hat membership: past[N-1] equals present within 1e-12 (1 + sup_norm).
bool is_continuous_compatible(const LiftedView& x);

/// A C^1 past profile r -> value(r) on [-T, 0] with its analytic derivative.
struct SmoothProfile {
  int dim = 1;
  std::function<std::vector<double>(double)> value;
  std::function<std::vector<double>(double)> derivative;
};

struct ProfileSample {
  LiftedState state;      ///< (value(0), value(r_j))
  LiftedState direction;  ///< Ax = (0, derivative(r_j))
};

/// Samples a profile; the derivative is checked against central differences first.
ProfileSample sample_profile(const SmoothProfile& profile, const PathGrid& grid);

nlohmann::json to_json(const LiftedView& x);
LiftedState lifted_state_from_json(const nlohmann::json& j);

}  // namespace pathflow
