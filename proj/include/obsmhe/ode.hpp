#pragma once

#include <string>
#include <vector>

#include "obsmhe/core.hpp"
#include "obsmhe/grid.hpp"
#include "obsmhe/signal.hpp"
#include "obsmhe/system.hpp"

namespace obsmhe {

/// Dense solution on a TimeGrid. `stm` and `sensitivity` are filled only by
/// the operations that compute them.
template <typename Scalar>
struct Trajectory {
  TimeGrid grid;
  std::vector<Vector<Scalar>> states;
  std::vector<Matrix<Scalar>> stm;
  std::vector<Vector<Scalar>> sensitivity;

  const Vector<Scalar>& at_time(double t) const { return states[static_cast<std::size_t>(grid.local_index(t))]; }
  const Vector<Scalar>& back() const { return states.back(); }
};

namespace detail {

template <typename Scalar>
struct Rk4Request {
  bool with_stm = false;
  const SampledSignal<Scalar>* process_noise = nullptr;
  const SampledSignal<Scalar>* noise_direction = nullptr;
};

template <typename Scalar>
void check_domain(const ControlSystem<Scalar>& sys, const Vector<Scalar>& x, double t) {
  if (!sys.in_domain(x)) {
    throw Error(ErrorKind::DomainViolation, "state leaves the output domain at t = " + num(t));
  }
}

template <typename Scalar>
void check_breakpoints(const InputSignal<Scalar>& u, const TimeGrid& grid) {
  for (double b : u.breakpoints()) {
    if (b <= grid.t_start() || b >= grid.t_end()) continue;
    require(TimeGrid::on_lattice(b, grid.step()), ErrorKind::GridMismatch,
            "input breakpoint " + num(b) + " is not a grid node");
  }
}

/// Fixed-step classical RK4 on the state, optionally co-integrating the
/// state-transition matrix and the process-noise sensitivity z' = A z + dw.
/// All stage Jacobians are evaluated on the same stage states as f.
template <typename Scalar>
Trajectory<Scalar> integrate(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi,
                             const InputSignal<Scalar>& u, const TimeGrid& grid, const Rk4Request<Scalar>& req) {
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;
  require(xi.size() == sys.n_x, ErrorKind::InvalidArgument, "initial state has wrong dimension");
  require(u.dim() == sys.n_u, ErrorKind::InvalidArgument, "input signal has wrong dimension");
  check_breakpoints(u, grid);

  const SampledSignal<Scalar>* w = req.process_noise;
  if (w != nullptr) {
    require(w->dim() == sys.n_x, ErrorKind::InvalidArgument, "process noise has wrong dimension");
    w->check_aligned(grid);
    if (w->is_zero()) w = nullptr;
  }
  const SampledSignal<Scalar>* dw = req.noise_direction;
  if (dw != nullptr) {
    require(dw->dim() == sys.n_x, ErrorKind::InvalidArgument, "noise direction has wrong dimension");
    dw->check_aligned(grid);
  }
  const bool with_stm = req.with_stm;
  const bool with_z = dw != nullptr;
  const bool need_jac = with_stm || with_z;

  const auto n = static_cast<std::size_t>(grid.intervals());
  Trajectory<Scalar> out{grid, {}, {}, {}};
  out.states.reserve(n + 1);
  out.states.push_back(xi);
  check_domain(sys, xi, grid.t_start());
  if (with_stm) {
    out.stm.reserve(n + 1);
    out.stm.push_back(Mat::Identity(sys.n_x, sys.n_x));
  }
  if (with_z) {
    out.sensitivity.reserve(n + 1);
    out.sensitivity.push_back(Vec::Zero(sys.n_x));
  }

  const Scalar h = Scalar(grid.step());
  const Scalar half = h / Scalar(2);
  const Scalar sixth = h / Scalar(6);
  const bool single_piece = u.pieces().size() == 1;

  for (std::size_t i = 0; i < n; ++i) {
    const double t0 = grid.time(static_cast<std::int64_t>(i));
    const double t1 = grid.time(static_cast<std::int64_t>(i) + 1);
    const double tm = t0 + 0.5 * grid.step();
    const std::size_t piece = single_piece ? 0 : u.piece_index(tm);
    const Vec u0 = u.eval_on_piece(piece, Scalar(t0));
    const Vec um = u.eval_on_piece(piece, Scalar(tm));
    const Vec u1 = u.eval_on_piece(piece, Scalar(t1));

    const Vec& x = out.states.back();
    auto rhs = [&](const Vec& xs, const Vec& us) -> Vec {
      if (w == nullptr) return sys.f(xs, us);
      return sys.f(xs, us) + (*w)(tm);
    };
    const Vec k1 = rhs(x, u0);
    const Vec x2 = x + half * k1;
    const Vec k2 = rhs(x2, um);
    const Vec x3 = x + half * k2;
    const Vec k3 = rhs(x3, um);
    const Vec x4 = x + h * k3;
    const Vec k4 = rhs(x4, u1);
    Vec next = x + sixth * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);

    if (need_jac) {
      const Mat a1 = sys.df_dx(x, u0);
      const Mat a2 = sys.df_dx(x2, um);
      const Mat a3 = sys.df_dx(x3, um);
      const Mat a4 = sys.df_dx(x4, u1);
      if (with_stm) {
        const Mat& phi = out.stm.back();
        const Mat p1 = a1 * phi;
        const Mat p2 = a2 * (phi + half * p1);
        const Mat p3 = a3 * (phi + half * p2);
        const Mat p4 = a4 * (phi + h * p3);
        Mat phi_next = phi + sixth * (p1 + Scalar(2) * p2 + Scalar(2) * p3 + p4);
        out.stm.push_back(std::move(phi_next));
      }
      if (with_z) {
        const Vec& z = out.sensitivity.back();
        const Vec d = (*dw)(tm);
        const Vec z1 = a1 * z + d;
        const Vec z2 = a2 * (z + half * z1) + d;
        const Vec z3 = a3 * (z + half * z2) + d;
        const Vec z4 = a4 * (z + h * z3) + d;
        Vec z_next = z + sixth * (z1 + Scalar(2) * z2 + Scalar(2) * z3 + z4);
        out.sensitivity.push_back(std::move(z_next));
      }
    }
    check_domain(sys, next, t1);
    out.states.push_back(std::move(next));
  }
  return out;
}

}  // namespace detail

/// Flow phi_f(s; s1, xi, u) at every node of `grid` (s1 = grid.t_start()).
template <typename Scalar>
Trajectory<Scalar> flow(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi, const InputSignal<Scalar>& u,
                        const TimeGrid& grid) {
  return detail::integrate(sys, xi, u, grid, detail::Rk4Request<Scalar>{});
}

template <typename Scalar>
Trajectory<Scalar> flow(const ControlSystem<Scalar>& sys, double s1, double s2, const Vector<Scalar>& xi,
                        const InputSignal<Scalar>& u, double step) {
  return flow(sys, xi, u, TimeGrid::covering(s1, s2, step));
}

/// Flow together with the state-transition matrix Phi_f(s; s1, xi, u).
template <typename Scalar>
Trajectory<Scalar> stm(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi, const InputSignal<Scalar>& u,
                       const TimeGrid& grid) {
  detail::Rk4Request<Scalar> req;
  req.with_stm = true;
  return detail::integrate(sys, xi, u, grid, req);
}

/// Solution of x' = f(x, u) + w. A zero w reproduces `flow` exactly.
template <typename Scalar>
Trajectory<Scalar> perturbed_flow(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi,
                                  const InputSignal<Scalar>& u, const SampledSignal<Scalar>& w, const TimeGrid& grid) {
  detail::Rk4Request<Scalar> req;
  req.process_noise = &w;
  return detail::integrate(sys, xi, u, grid, req);
}

/// Perturbed flow with the state-transition matrix along it.
template <typename Scalar>
Trajectory<Scalar> perturbed_stm(const ControlSystem<Scalar>& sys, const Vector<Scalar>& xi,
                                 const InputSignal<Scalar>& u, const SampledSignal<Scalar>& w, const TimeGrid& grid) {
  detail::Rk4Request<Scalar> req;
  req.with_stm = true;
  req.process_noise = &w;
  return detail::integrate(sys, xi, u, grid, req);
}

/// z(s) = d_w x~(s, w) . dw along the perturbed trajectory from (grid.t_start(), x0).
/// `states` holds x~, `sensitivity` holds z.
template <typename Scalar>
Trajectory<Scalar> noise_sensitivity(const ControlSystem<Scalar>& sys, const Vector<Scalar>& x0,
                                     const InputSignal<Scalar>& u, const SampledSignal<Scalar>& w,
                                     const SampledSignal<Scalar>& dw, const TimeGrid& grid) {
  detail::Rk4Request<Scalar> req;
  req.process_noise = &w;
  req.noise_direction = &dw;
  return detail::integrate(sys, x0, u, grid, req);
}

}  // namespace obsmhe
