#include "obsmhe/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obsmhe/cost.hpp"
#include "obsmhe/mhe.hpp"
#include "obsmhe/noise.hpp"
#include "obsmhe/ode.hpp"
#include "obsmhe/parallel.hpp"
#include "obsmhe/random.hpp"

namespace obsmhe {

namespace {

double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

double hold_length(double noise_step, double step) { return noise_step > 0.0 ? noise_step : 10.0 * step; }

double singular_threshold(const std::optional<double>& tol, double max_eig) { return tol ? *tol : 1e-8 * max_eig; }

/// ||d_w x~(s)|| <= int_0^s ||Phi~(s) Phi~(tau)^{-1}|| dtau for every node s of
/// `window`, by the trapezoidal rule along the perturbed flow from (0, x0).
std::vector<double> noise_gain(const Trajectory<double>& traj, const TimeGrid& window) {
  const double h = traj.grid.step();
  std::vector<Eigen::MatrixXd> inv;
  inv.reserve(traj.stm.size());
  for (const auto& phi : traj.stm) inv.push_back(phi.inverse());
  std::vector<double> out;
  out.reserve(window.nodes());
  for (std::size_t i = 0; i < window.nodes(); ++i) {
    const auto s = static_cast<std::size_t>(window.first()) + i;
    double acc = 0.0;
    for (std::size_t j = 0; j <= s; ++j) {
      const double w = (j == 0 || j == s) ? 0.5 : 1.0;
      acc += w * op_norm(traj.stm[s] * inv[j]);
    }
    out.push_back(s == 0 ? 0.0 : acc * h);
  }
  return out;
}

struct WindowConstants {
  double min_eig = 0.0;
  double max_eig = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double g3 = 0.0;
};

}  // namespace

NonuniformAudit audit_nonuniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                           double T, double nu, double step, const NonuniformOptions& opts) {
  require(T > 0.0 && t >= T - 1e-12, ErrorKind::InvalidArgument, "audit needs t >= T > 0");
  require(nu >= 0.0, ErrorKind::InvalidArgument, "noise level must be non-negative");
  require(opts.n_noise_samples >= 0, ErrorKind::InvalidArgument, "sample count must be non-negative");
  const TimeGrid window = TimeGrid::covering(std::max(0.0, t - T), t, step);
  const Eigen::VectorXd center = reference_state(sys, x0, u, window.t_start(), step);
  const GrammianReport gram = observability_grammian(sys, t, T, center, u, step);
  const double tol = singular_threshold(opts.singular_tol, gram.max_eig);
  require(gram.min_eig > tol, ErrorKind::SingularWindow,
          "Grammian min_eig " + num(gram.min_eig) + " <= " + num(tol) + " at t = " +
              num(t));

  const auto hphi = WindowProblem<double>::output_jacobians(sys, u, window, center);
  std::vector<double> hphi_norm;
  for (const auto& m : hphi) hphi_norm.push_back(op_norm(m));

  NonuniformAudit out;
  out.t = t;
  out.T = T;
  out.nu = nu;
  out.mu_t = gram.min_eig;
  out.C1 = 2.0 * T * *std::max_element(hphi_norm.begin(), hphi_norm.end());

  const double hold = hold_length(opts.noise_step, step);
  const TimeGrid full(step, 0, window.last());
  Rng rng(opts.seed);
  std::vector<SampledSignal<double>> draws{SampledSignal<double>::zero(sys.n_x, 0.0, t, hold)};
  for (int j = 0; j < opts.n_noise_samples; ++j) draws.push_back(uniform_signal(sys.n_x, nu, t, hold, rng));

  double c2 = 0.0;
  for (const auto& w : draws) {
    const Trajectory<double> traj = perturbed_stm(sys, x0, u, w, full);
    const std::vector<double> gain = noise_gain(traj, window);
    for (std::size_t i = 0; i < window.nodes(); ++i) {
      const auto s = static_cast<std::size_t>(window.first()) + i;
      const Eigen::VectorXd us = u(window.time(static_cast<std::int64_t>(i)));
      const double hx = op_norm(sys.dh_dx(traj.states[s], us));
      c2 = std::max(c2, hphi_norm[i] * hx * gain[i]);
    }
  }
  out.C2 = 2.0 * T * c2;
  out.K = (out.C1 + out.C2) / (2.0 * out.mu_t);
  return out;
}

StabilityAudit evaluate_uniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                          const std::vector<double>& t_grid, double R, double nu, double alpha,
                                          double step, const UniformOptions& opts) {
  require(R > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  require(nu >= 0.0, ErrorKind::InvalidArgument, "noise level must be non-negative");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  require(opts.n_ball_samples >= 0, ErrorKind::InvalidArgument, "sample count must be non-negative");
  require(opts.fd_delta > 0.0, ErrorKind::InvalidArgument, "fd_delta must be positive");
  const auto centers = window_centers(sys, x0, u, T, t_grid, step);
  const double hold = hold_length(opts.noise_step, step);
  const double delta = opts.fd_delta;
  const NoiseChannels ch = opts.channels;

  const auto per_window = parallel_map(t_grid.size(), opts.threads, [&](std::size_t k) {
    const double t = t_grid[k];
    const TimeGrid window = TimeGrid::covering(std::max(0.0, t - T), t, step);
    const Eigen::VectorXd& center = centers[k];
    Rng rng(opts.seed, k);

    auto zero_noise = [&]() {
      return NoiseSignals<double>{SampledSignal<double>::zero(sys.n_y, 0.0, t, hold),
                                  SampledSignal<double>::zero(sys.n_x, 0.0, t, hold)};
    };
    auto unit = [&](int dim, int i) { return constant_signal(Eigen::VectorXd::Unit(dim, i), t, hold); };

    // G = [d_v d_xi l~ . e_k | d_w d_xi l~ . e_k] on constant unit directions.
    auto sensitivity = [&](const Eigen::VectorXd& xi, const NoiseSignals<double>& eta) {
      double total = 0.0;
      if (ch.v) {
        Eigen::MatrixXd gv(sys.n_x, sys.n_y);
        for (int i = 0; i < sys.n_y; ++i) gv.col(i) = grad_sensitivity_v(sys, xi, u, window, unit(sys.n_y, i));
        total += op_norm(gv);
      }
      if (ch.w) {
        Eigen::MatrixXd gw(sys.n_x, sys.n_x);
        for (int i = 0; i < sys.n_x; ++i) {
          gw.col(i) = grad_sensitivity_w(sys, x0, xi, u, eta, window, unit(sys.n_x, i));
        }
        total += op_norm(gw);
      }
      return total;
    };

    // Central differences of the full_fd Hessian of l~ along canonical xi and
    // constant-noise directions, combined in quadrature.
    auto hessian_rate = [&](const Eigen::VectorXd& xi, const NoiseSignals<double>& eta) {
      double sum = 0.0;
      const auto base = WindowProblem<double>::perturbed(sys, u, window, x0, eta);
      for (int j = 0; j < sys.n_x; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(sys.n_x, j);
        const Eigen::MatrixXd d = (base.fd_hessian(xi + delta * e) - base.fd_hessian(xi - delta * e)) / (2 * delta);
        sum += std::pow(op_norm(d), 2);
      }
      auto along = [&](bool measurement, int dim) {
        for (int i = 0; i < dim; ++i) {
          NoiseSignals<double> plus = eta;
          NoiseSignals<double> minus = eta;
          const auto dir = unit(dim, i);
          if (measurement) {
            plus.v = eta.v.plus(dir, delta);
            minus.v = eta.v.plus(dir, -delta);
          } else {
            plus.w = eta.w.plus(dir, delta);
            minus.w = eta.w.plus(dir, -delta);
          }
          const auto hp = WindowProblem<double>::perturbed(sys, u, window, x0, plus).fd_hessian(xi);
          const auto hm = WindowProblem<double>::perturbed(sys, u, window, x0, minus).fd_hessian(xi);
          sum += std::pow(op_norm((hp - hm) / (2 * delta)), 2);
        }
      };
      if (ch.v) along(true, sys.n_y);
      if (ch.w) along(false, sys.n_x);
      return std::sqrt(sum);
    };

    WindowConstants wc;
    const GrammianReport gram = observability_grammian(sys, t, T, center, u, step);
    wc.min_eig = gram.min_eig;
    wc.max_eig = gram.max_eig;

    std::vector<Eigen::VectorXd> points{center};
    std::vector<NoiseSignals<double>> noises{zero_noise()};
    for (int j = 0; j < opts.n_ball_samples; ++j) {
      points.push_back(center + rng.in_ball(sys.n_x, R));
      NoiseSignals<double> eta = zero_noise();
      if (ch.v) eta.v = uniform_signal(sys.n_y, nu, t, hold, rng);
      if (ch.w) eta.w = uniform_signal(sys.n_x, nu, t, hold, rng);
      noises.push_back(std::move(eta));
    }
    for (std::size_t j = 0; j < points.size(); ++j) {
      wc.a1 = std::max(wc.a1, hessian_rate(points[j], noises[j]));
      wc.g3 = std::max(wc.g3, sensitivity(points[j], noises[j]));
      wc.a2 = std::max(wc.a2, sensitivity(center, noises[j]));
    }
    wc.g3 = std::max(wc.g3, wc.a2);
    return wc;
  });

  StabilityAudit audit;
  audit.T = T;
  audit.R = R;
  audit.nu = nu;
  audit.alpha = alpha;
  audit.t_grid = t_grid;
  audit.channels = ch;
  double inf_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < per_window.size(); ++k) {
    const auto& wc = per_window[k];
    const double tol = singular_threshold(opts.singular_tol, wc.max_eig);
    require(wc.min_eig > tol, ErrorKind::SingularWindow,
            "Grammian min_eig " + num(wc.min_eig) + " <= " + num(tol) + " at t = " +
                num(t_grid[k]));
    audit.min_eig.push_back(wc.min_eig);
    inf_min = std::min(inf_min, wc.min_eig);
    audit.a1_hat = std::max(audit.a1_hat, wc.a1);
    audit.a2_hat = std::max(audit.a2_hat, wc.a2);
    audit.g3_hat = std::max(audit.g3_hat, wc.g3);
  }
  audit.mu_hat = 2.0 * inf_min;
  audit.g1 = audit.a1_hat * (nu + R);
  audit.g2 = audit.a2_hat * nu;
  audit.condition1_ok = audit.g1 / audit.mu_hat <= alpha;
  audit.condition2_ok = audit.g2 / audit.mu_hat <= R * (1.0 - alpha);
  audit.conditions_ok = audit.condition1_ok && audit.condition2_ok;
  if (audit.mu_hat > audit.g1) {
    audit.bound_coefficient = audit.g3_hat / (audit.mu_hat - audit.g1);
    audit.predicted_bound = *audit.bound_coefficient * nu;
  }
  return audit;
}

StabilityAudit audit_uniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                       const std::vector<double>& t_grid, double R, double nu, double alpha,
                                       double step, const UniformOptions& opts) {
  StabilityAudit audit = evaluate_uniform_stability(sys, x0, u, T, t_grid, R, nu, alpha, step, opts);
  if (!audit.condition1_ok) {
    throw ConditionsFailure("g1/mu = " + num(audit.g1 / audit.mu_hat) + " exceeds alpha", audit);
  }
  if (!audit.condition2_ok) {
    throw ConditionsFailure("g2/mu = " + num(audit.g2 / audit.mu_hat) + " exceeds R(1 - alpha)", audit);
  }
  return audit;
}

}  // namespace obsmhe
