#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>

#include "obsmhe/core.hpp"

namespace obsmhe {

/// Uniform integration grid. Nodes sit on the global lattice {i * step}
/// anchored at t = 0, so two grids with the same step share node times
/// bit-for-bit. The grid spans lattice indices [first, last].
class TimeGrid {
 public:
  TimeGrid(double step, std::int64_t first, std::int64_t last)
      : step_(step), first_(first), last_(last) {
    require(step > 0.0 && std::isfinite(step), ErrorKind::GridMismatch, "grid step must be positive");
    require(first >= 0 && last >= first, ErrorKind::GridMismatch, "grid must satisfy 0 <= t_start <= t_end");
  }

  /// Grid over [t_start, t_end]; both ends must be lattice points of `step`.
  static TimeGrid covering(double t_start, double t_end, double step) {
    require(step > 0.0 && std::isfinite(step), ErrorKind::GridMismatch, "grid step must be positive");
    require(t_start <= t_end, ErrorKind::GridMismatch, "window end precedes window start");
    return TimeGrid(step, lattice_index(t_start, step), lattice_index(t_end, step));
  }

  /// Index of `t` on the lattice of `step`; throws GridMismatch off-lattice.
  static std::int64_t lattice_index(double t, double step) {
    const double k = t / step;
    const double r = std::round(k);
    require(std::abs(k - r) <= 1e-7, ErrorKind::GridMismatch,
            "time " + num(t) + " is not a multiple of grid step " + num(step));
    require(r >= 0.0, ErrorKind::GridMismatch, "negative time " + num(t));
    return static_cast<std::int64_t>(r);
  }

  static bool on_lattice(double t, double step) {
    const double k = t / step;
    return std::abs(k - std::round(k)) <= 1e-7;
  }

  double step() const noexcept { return step_; }
  std::int64_t first() const noexcept { return first_; }
  std::int64_t last() const noexcept { return last_; }
  /// Number of intervals N (node count is N + 1).
  std::int64_t intervals() const noexcept { return last_ - first_; }
  std::size_t nodes() const noexcept { return static_cast<std::size_t>(intervals() + 1); }

  /// Time of local node i (0 <= i <= N).
  double time(std::int64_t i) const noexcept { return static_cast<double>(first_ + i) * step_; }
  double t_start() const noexcept { return time(0); }
  double t_end() const noexcept { return time(intervals()); }

  bool simpson_ready() const noexcept { return intervals() % 2 == 0; }

  /// Local node index of an absolute time inside this grid.
  std::int64_t local_index(double t) const {
    const std::int64_t k = lattice_index(t, step_);
    require(k >= first_ && k <= last_, ErrorKind::GridMismatch, "time outside grid");
    return k - first_;
  }

  bool contains_node(double t) const {
    if (!on_lattice(t, step_)) return false;
    const auto k = static_cast<std::int64_t>(std::round(t / step_));
    return k >= first_ && k <= last_;
  }

  TimeGrid sub(double t_start, double t_end) const {
    TimeGrid g = covering(t_start, t_end, step_);
    require(g.first_ >= first_ && g.last_ <= last_, ErrorKind::GridMismatch, "sub-window outside grid");
    return g;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double step_;
  std::int64_t first_;
  std::int64_t last_;
};

namespace detail {
template <typename T, typename = void>
struct ScalarOf {
  using type = T;
};
template <typename T>
struct ScalarOf<T, std::void_t<typename T::Scalar>> {
  using type = typename T::Scalar;
};
}  // namespace detail

/// Composite Simpson rule over the grid; `at(i)` returns the integrand at
/// local node i (scalar or Eigen object).
template <typename F>
auto simpson(const TimeGrid& grid, F&& at) {
  require(grid.simpson_ready(), ErrorKind::GridMismatch, "Simpson quadrature needs an even number of intervals");
  using Value = std::decay_t<decltype(at(std::int64_t{0}))>;
  using Scalar = typename detail::ScalarOf<Value>::type;
  const std::int64_t n = grid.intervals();
  Value acc = at(0);
  if (n == 0) return Value(acc * Scalar(0));
  for (std::int64_t i = 1; i < n; ++i) {
    const Scalar w = (i % 2 == 1) ? Scalar(4) : Scalar(2);
    acc += w * at(i);
  }
  acc += at(n);
  return Value(acc * (Scalar(grid.step()) / Scalar(3)));
}

}  // namespace obsmhe
