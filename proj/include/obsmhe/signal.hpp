#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "obsmhe/core.hpp"
#include "obsmhe/grid.hpp"

namespace obsmhe {

/// Piecewise-defined input trajectory u(s), s >= 0. Pieces are ordered by
/// start time, the first starts at 0, and u is right-continuous at every
/// breakpoint. Each evaluator may be called slightly outside its own piece
/// (at the right end of an RK4 step), so it must extend continuously.
template <typename Scalar>
class InputSignal {
 public:
  using Evaluator = std::function<Vector<Scalar>(Scalar)>;

  struct Piece {
    double start;
    Evaluator eval;
  };

  InputSignal(int dim, std::vector<Piece> pieces, std::optional<Scalar> bound = std::nullopt)
      : dim_(dim), pieces_(std::move(pieces)), bound_(bound) {
    require(dim_ >= 0, ErrorKind::InvalidArgument, "input dimension must be non-negative");
    require(!pieces_.empty(), ErrorKind::InvalidArgument, "input signal needs at least one piece");
    require(pieces_.front().start == 0.0, ErrorKind::InvalidArgument, "first input piece must start at 0");
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
      require(pieces_[i].start > pieces_[i - 1].start, ErrorKind::InvalidArgument,
              "input pieces must have increasing start times");
    }
  }

  static InputSignal constant(const Vector<Scalar>& value) {
    const Scalar norm = value.norm();
    return InputSignal(static_cast<int>(value.size()), {{0.0, [value](Scalar) { return value; }}}, norm);
  }

  static InputSignal zero(int dim) { return constant(Vector<Scalar>::Zero(dim)); }

  int dim() const noexcept { return dim_; }
  const std::optional<Scalar>& bound() const noexcept { return bound_; }
  std::span<const Piece> pieces() const noexcept { return pieces_; }

  std::size_t piece_index(double s) const {
    require(s >= 0.0, ErrorKind::InvalidArgument, "input evaluated at negative time");
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                               [](double v, const Piece& p) { return v < p.start; });
    return static_cast<std::size_t>(std::distance(pieces_.begin(), it)) - 1;
  }

  Vector<Scalar> eval_on_piece(std::size_t piece, Scalar s) const { return pieces_[piece].eval(s); }

  Vector<Scalar> operator()(Scalar s) const {
    return eval_on_piece(piece_index(static_cast<double>(s)), s);
  }

  /// Breakpoints strictly after 0.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < pieces_.size(); ++i) out.push_back(pieces_[i].start);
    return out;
  }

 private:
  int dim_;
  std::vector<Piece> pieces_;
  std::optional<Scalar> bound_;
};

/// Sample-and-hold signal: sample k holds on [t_start + k*step, t_start + (k+1)*step).
/// Times past the last interval (in particular t_end itself) read the last
/// sample; times before t_start read the first.
template <typename Scalar>
class SampledSignal {
 public:
  SampledSignal(double t_start, double step, Matrix<Scalar> samples)
      : t_start_(t_start), step_(step), samples_(std::move(samples)) {
    require(step_ > 0.0, ErrorKind::InvalidArgument, "sample step must be positive");
    require(samples_.cols() > 0, ErrorKind::InvalidArgument, "sampled signal needs at least one sample");
  }

  static SampledSignal zero(int dim, double t_start, double t_end, double step) {
    return SampledSignal(t_start, step, Matrix<Scalar>::Zero(dim, sample_count(t_start, t_end, step)));
  }

  /// Number of hold intervals needed to cover [t_start, t_end].
  static Eigen::Index sample_count(double t_start, double t_end, double step) {
    const double k = (t_end - t_start) / step;
    return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(k - 1e-9)));
  }

  int dim() const noexcept { return static_cast<int>(samples_.rows()); }
  double t_start() const noexcept { return t_start_; }
  double step() const noexcept { return step_; }
  double t_end() const noexcept { return t_start_ + static_cast<double>(samples_.cols()) * step_; }
  Eigen::Index size() const noexcept { return samples_.cols(); }
  const Matrix<Scalar>& samples() const noexcept { return samples_; }

  Eigen::Index index_at(double s) const {
    const double k = std::floor((s - t_start_) / step_ + 1e-9);
    if (k < 0.0) return 0;
    return std::min<Eigen::Index>(static_cast<Eigen::Index>(k), samples_.cols() - 1);
  }

  Vector<Scalar> operator()(double s) const { return samples_.col(index_at(s)); }

  bool covers(double a, double b) const {
    return a >= t_start_ - 1e-9 * step_ && b <= t_end() + 1e-9 * step_;
  }

  Scalar sup_norm() const { return samples_.colwise().norm().maxCoeff(); }

  /// Sup of the sample norms that are read anywhere on [a, b].
  Scalar sup_norm(double a, double b) const {
    const Eigen::Index i0 = index_at(a);
    const Eigen::Index i1 = index_at(b);
    return samples_.middleCols(i0, i1 - i0 + 1).colwise().norm().maxCoeff();
  }

  bool is_zero() const { return (samples_.array() == Scalar(0)).all(); }

  SampledSignal scaled(Scalar factor) const { return SampledSignal(t_start_, step_, samples_ * factor); }

  /// Pointwise sum; both signals must share the same sample layout.
  SampledSignal plus(const SampledSignal& other, Scalar factor = Scalar(1)) const {
    require(other.t_start_ == t_start_ && other.step_ == step_ && other.samples_.rows() == samples_.rows() &&
                other.samples_.cols() == samples_.cols(),
            ErrorKind::InvalidArgument, "sampled signals have different layouts");
    return SampledSignal(t_start_, step_, samples_ + factor * other.samples_);
  }

  /// Every hold boundary inside the grid must be a grid node.
  void check_aligned(const TimeGrid& grid) const {
    require(covers(grid.t_start(), grid.t_end()), ErrorKind::GridMismatch, "noise signal does not cover the window");
    const double ratio = step_ / grid.step();
    require(std::abs(ratio - std::round(ratio)) <= 1e-7 && std::round(ratio) >= 1.0, ErrorKind::GridMismatch,
            "noise sample step must be a multiple of the grid step");
    require(TimeGrid::on_lattice(t_start_, grid.step()), ErrorKind::GridMismatch,
            "noise samples must start on a grid node");
  }

 private:
  double t_start_;
  double step_;
  Matrix<Scalar> samples_;
};

/// Measurement noise v (values in R^{n_y}) and process noise w (values in R^{n_x}).
template <typename Scalar>
struct NoiseSignals {
  SampledSignal<Scalar> v;
  SampledSignal<Scalar> w;

  static NoiseSignals zero(int n_y, int n_x, double t_end, double step) {
    return {SampledSignal<Scalar>::zero(n_y, 0.0, t_end, step), SampledSignal<Scalar>::zero(n_x, 0.0, t_end, step)};
  }

  Scalar norm() const { return std::max(v.sup_norm(), w.sup_norm()); }

  /// ||eta||_{t,T} = max(sup ||v|| on [t-T, t], sup ||w|| on [0, t]).
  Scalar norm(double t, double T) const { return std::max(v.sup_norm(t - T, t), w.sup_norm(0.0, t)); }

  bool is_zero() const { return v.is_zero() && w.is_zero(); }
};

}  // namespace obsmhe
