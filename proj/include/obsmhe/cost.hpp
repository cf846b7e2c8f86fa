#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "obsmhe/core.hpp"
#include "obsmhe/grid.hpp"
#include "obsmhe/ode.hpp"
#include "obsmhe/signal.hpp"
#include "obsmhe/system.hpp"

namespace obsmhe {

enum class HessianMode { GaussNewton, FullFd };

template <typename Scalar>
struct WindowCost {
  double t1 = 0.0;
  double t2 = 0.0;
  Scalar value{};
};

/// Central-difference step used for every derivative oracle and for the
/// full_fd Hessian.
template <typename Scalar>
Scalar fd_step(const Vector<Scalar>& point) {
  using std::max;
  return Scalar(1e-5) * max(Scalar(1), point.norm());
}

/// Output-matching problem on one window: a fixed sequence of reference
/// outputs (one per grid node) against the outputs of the flow started at
/// (window start, xi). Both the clean cost l(t1, t2, xi1, ., u) and the
/// perturbed cost l~(t-T, t, ., u, eta) are instances.
template <typename Scalar>
class WindowProblem {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  WindowProblem(ControlSystem<Scalar> sys, InputSignal<Scalar> u, TimeGrid window, std::vector<Vec> reference)
      : sys_(std::move(sys)), u_(std::move(u)), window_(window), reference_(std::move(reference)) {
    require(window_.simpson_ready(), ErrorKind::GridMismatch, "window needs an even number of intervals");
    require(reference_.size() == window_.nodes(), ErrorKind::InvalidArgument, "one reference output per node");
  }

  /// Reference outputs of the clean flow from (window start, xi1).
  static WindowProblem clean(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u, const TimeGrid& window,
                             const Vec& xi1) {
    const Trajectory<Scalar> ref = flow(sys, xi1, u, window);
    return WindowProblem(sys, u, window, outputs(sys, u, ref.states, window, 0));
  }

  /// Reference outputs h(x~(s, w)) + v(s) where x~ starts from x0 at time 0.
  static WindowProblem perturbed(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u,
                                 const TimeGrid& window, const Vec& x0, const NoiseSignals<Scalar>& eta) {
    const Trajectory<Scalar> ref = perturbed_reference(sys, u, window, x0, eta.w);
    const auto offset = static_cast<std::size_t>(ref.grid.local_index(window.t_start()));
    std::vector<Vec> y = outputs(sys, u, ref.states, window, offset);
    if (!eta.v.is_zero()) {
      require(eta.v.dim() == sys.n_y, ErrorKind::InvalidArgument, "measurement noise has wrong dimension");
      require(eta.v.covers(window.t_start(), window.t_end()), ErrorKind::GridMismatch,
              "measurement noise does not cover the window");
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += eta.v(window.time(static_cast<std::int64_t>(i)));
    }
    return WindowProblem(sys, u, window, std::move(y));
  }

  /// x~ on [0, t] with the window's grid step.
  static Trajectory<Scalar> perturbed_reference(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u,
                                                const TimeGrid& window, const Vec& x0,
                                                const SampledSignal<Scalar>& w) {
    const TimeGrid full(window.step(), 0, window.last());
    return perturbed_flow(sys, x0, u, w, full);
  }

  const TimeGrid& window() const noexcept { return window_; }
  const ControlSystem<Scalar>& system() const noexcept { return sys_; }
  const InputSignal<Scalar>& input() const noexcept { return u_; }
  const std::vector<Vec>& reference() const noexcept { return reference_; }

  Scalar cost(const Vec& xi) const {
    const Trajectory<Scalar> cand = flow(sys_, xi, u_, window_);
    const std::vector<Vec> y = outputs(sys_, u_, cand.states, window_, 0);
    return simpson(window_, [&](std::int64_t i) {
      const auto k = static_cast<std::size_t>(i);
      return Scalar((reference_[k] - y[k]).squaredNorm());
    });
  }

  /// 2 int (y(xi) - y_ref)^T H Phi ds, returned as a column vector.
  Vec gradient(const Vec& xi) const {
    const Trajectory<Scalar> cand = stm(sys_, xi, u_, window_);
    return simpson(window_, [&](std::int64_t i) {
      const auto k = static_cast<std::size_t>(i);
      const Vec& x = cand.states[k];
      const Vec us = u_(Scalar(window_.time(i)));
      const Mat hphi = sys_.dh_dx(x, us) * cand.stm[k];
      return Vec(Scalar(2) * hphi.transpose() * (sys_.h(x, us) - reference_[k]));
    });
  }

  /// 2 C(t, T, xi, u): the Gauss-Newton part of the Hessian.
  Mat gauss_newton(const Vec& xi) const { return Scalar(2) * grammian_along(sys_, u_, window_, xi); }

  /// Symmetrized central differences of the analytic gradient.
  Mat fd_hessian(const Vec& xi) const {
    const Scalar eps = fd_step(xi);
    const auto n = xi.size();
    Mat hess(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vec xp = xi;
      Vec xm = xi;
      xp(j) += eps;
      xm(j) -= eps;
      hess.col(j) = (gradient(xp) - gradient(xm)) / (Scalar(2) * eps);
    }
    return (hess + hess.transpose()) / Scalar(2);
  }

  Mat hessian(const Vec& xi, HessianMode mode) const {
    return mode == HessianMode::GaussNewton ? gauss_newton(xi) : fd_hessian(xi);
  }

  std::vector<Mat> output_sensitivities(const Vec& xi) const { return output_jacobians(sys_, u_, window_, xi); }

  /// H Phi at every node of the flow from (window start, xi).
  static std::vector<Mat> output_jacobians(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u,
                                           const TimeGrid& window, const Vec& xi) {
    const Trajectory<Scalar> cand = stm(sys, xi, u, window);
    std::vector<Mat> out;
    out.reserve(cand.states.size());
    for (std::size_t k = 0; k < cand.states.size(); ++k) {
      const Vec us = u(Scalar(window.time(static_cast<std::int64_t>(k))));
      out.push_back(sys.dh_dx(cand.states[k], us) * cand.stm[k]);
    }
    return out;
  }

  /// Int Phi^T H^T H Phi ds, symmetrized.
  static Mat grammian_along(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u, const TimeGrid& window,
                            const Vec& xi) {
    const std::vector<Mat> hphi = output_jacobians(sys, u, window, xi);
    const Mat c = simpson(window, [&](std::int64_t i) {
      const Mat& m = hphi[static_cast<std::size_t>(i)];
      return Mat(m.transpose() * m);
    });
    return (c + c.transpose()) / Scalar(2);
  }

 private:
  static std::vector<Vec> outputs(const ControlSystem<Scalar>& sys, const InputSignal<Scalar>& u,
                                  const std::vector<Vec>& states, const TimeGrid& window, std::size_t offset) {
    std::vector<Vec> y;
    y.reserve(window.nodes());
    for (std::size_t k = 0; k < window.nodes(); ++k) {
      y.push_back(sys.h(states[offset + k], u(Scalar(window.time(static_cast<std::int64_t>(k))))));
    }
    return y;
  }

  ControlSystem<Scalar> sys_;
  InputSignal<Scalar> u_;
  TimeGrid window_;
  std::vector<Vec> reference_;
};

/// Cumulative output error l(t1, t2, xi1, xi2, u) on `window` = [t1, t2].
template <typename Scalar>
WindowCost<Scalar> cum_output_error(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi1,
                                    const Vector<Scalar>& xi2, const InputSignal<Scalar>& u, const TimeGrid& window) {
  const auto problem = WindowProblem<Scalar>::clean(sys, u, window, xi1);
  return {window.t_start(), window.t_end(), problem.cost(xi2)};
}

template <typename Scalar>
Vector<Scalar> grad_cum_error(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi1, const Vector<Scalar>& xi2,
                              const InputSignal<Scalar>& u, const TimeGrid& window) {
  return WindowProblem<Scalar>::clean(sys, u, window, xi1).gradient(xi2);
}

template <typename Scalar>
Matrix<Scalar> hess_cum_error(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi1, const Vector<Scalar>& xi2,
                              const InputSignal<Scalar>& u, const TimeGrid& window, HessianMode mode) {
  return WindowProblem<Scalar>::clean(sys, u, window, xi1).hessian(xi2, mode);
}

/// Perturbed cost l~(t-T, t, xi, u, eta) on `window` = [t-T, t]; the reference
/// is driven from x0 at time 0.
template <typename Scalar>
WindowCost<Scalar> perturbed_cost(const ControlSystem<Scalar>& sys, const Vector<Scalar>& x0,
                                  const Vector<Scalar>& xi, const InputSignal<Scalar>& u,
                                  const NoiseSignals<Scalar>& eta, const TimeGrid& window) {
  const auto problem = WindowProblem<Scalar>::perturbed(sys, u, window, x0, eta);
  return {window.t_start(), window.t_end(), problem.cost(xi)};
}

template <typename Scalar>
Vector<Scalar> grad_perturbed_cost(const ControlSystem<Scalar>& sys, const Vector<Scalar>& x0,
                                   const Vector<Scalar>& xi, const InputSignal<Scalar>& u,
                                   const NoiseSignals<Scalar>& eta, const TimeGrid& window) {
  return WindowProblem<Scalar>::perturbed(sys, u, window, x0, eta).gradient(xi);
}

/// d_v d_xi l~ . dv = -2 int (H Phi)^T dv ds. Independent of eta.
template <typename Scalar>
Vector<Scalar> grad_sensitivity_v(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi,
                                  const InputSignal<Scalar>& u, const TimeGrid& window,
                                  const SampledSignal<Scalar>& dv) {
  require(dv.dim() == sys.n_y, ErrorKind::InvalidArgument, "measurement-noise direction has wrong dimension");
  const auto hphi = WindowProblem<Scalar>::output_jacobians(sys, u, window, xi);
  return simpson(window, [&](std::int64_t i) {
    return Vector<Scalar>(Scalar(-2) * hphi[static_cast<std::size_t>(i)].transpose() * dv(window.time(i)));
  });
}

/// d_w d_xi l~ . dw = -2 int (H Phi)^T H(x~) (d_w x~ . dw) ds.
template <typename Scalar>
Vector<Scalar> grad_sensitivity_w(const ControlSystem<Scalar>& sys, const Vector<Scalar>& x0,
                                  const Vector<Scalar>& xi, const InputSignal<Scalar>& u,
                                  const NoiseSignals<Scalar>& eta, const TimeGrid& window,
                                  const SampledSignal<Scalar>& dw) {
  const auto hphi = WindowProblem<Scalar>::output_jacobians(sys, u, window, xi);
  const TimeGrid full(window.step(), 0, window.last());
  const Trajectory<Scalar> z = noise_sensitivity(sys, x0, u, eta.w, dw, full);
  const auto offset = static_cast<std::size_t>(window.first());
  return simpson(window, [&](std::int64_t i) {
    const auto k = static_cast<std::size_t>(i);
    const Vector<Scalar> us = u(Scalar(window.time(i)));
    const Matrix<Scalar> h_ref = sys.dh_dx(z.states[offset + k], us);
    return Vector<Scalar>(Scalar(-2) * hphi[k].transpose() * (h_ref * z.sensitivity[offset + k]));
  });
}

}  // namespace obsmhe
