#include "obsmhe/mhe.hpp"

#include <algorithm>
#include <cmath>

#include "obsmhe/jacobi.hpp"
#include "obsmhe/ode.hpp"
#include "obsmhe/parallel.hpp"
#include "obsmhe/random.hpp"

namespace obsmhe {

void SolverOptions::validate() const {
  require(ball_radius > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  require(max_iters > 0, ErrorKind::InvalidArgument, "max_iters must be positive");
  require(grad_tol > 0.0, ErrorKind::InvalidArgument, "grad_tol must be positive");
  require(damping > 0.0 && damping_growth > 1.0 && damping_shrink > 0.0 && damping_shrink < 1.0,
          ErrorKind::InvalidArgument, "damping parameters must satisfy lambda > 0, growth > 1, 0 < shrink < 1");
}

MheSolution minimize_window(const WindowProblem<double>& problem, const Eigen::VectorXd& initial,
                            const SolverOptions& opts) {
  opts.validate();
  const Eigen::VectorXd center = opts.ball_center.value_or(initial);
  require(center.size() == initial.size(), ErrorKind::InvalidArgument, "ball center has wrong dimension");
  const double R = opts.ball_radius;
  const auto n = initial.size();

  auto project = [&](const Eigen::VectorXd& x, bool& hit) -> Eigen::VectorXd {
    const Eigen::VectorXd d = x - center;
    const double dist = d.norm();
    hit = dist > R;
    return hit ? Eigen::VectorXd(center + d * (R / dist)) : x;
  };

  MheSolution sol;
  sol.t = problem.window().t_end();
  sol.T = problem.window().t_end() - problem.window().t_start();
  bool hit = false;
  Eigen::VectorXd xi = project(initial, hit);
  double cost = problem.cost(xi);
  Eigen::VectorXd grad = problem.gradient(xi);
  sol.cost_history.push_back(cost);
  double lambda = opts.damping;
  bool last_projected = false;
  int consecutive = 0;
  int iters = 0;

  auto snapshot = [&]() {
    sol.xi_star = xi;
    sol.cost = cost;
    sol.grad_norm = grad.norm();
    sol.grad_tol_effective = opts.grad_tol * std::max(1.0, cost);
    sol.iterations = iters;
    sol.projected = last_projected;
  };

  while (true) {
    const double tol = opts.grad_tol * std::max(1.0, cost);
    if (grad.norm() <= tol && !last_projected) break;
    if (iters >= opts.max_iters) {
      snapshot();
      sol.status = std::string(to_string(ErrorKind::MaxItersExceeded));
      throw SolveFailure(ErrorKind::MaxItersExceeded,
                         "no stationary point after " + std::to_string(opts.max_iters) + " iterations", sol);
    }
    ++iters;
    const Eigen::MatrixXd hess = problem.hessian(xi, opts.hessian);
    const Eigen::MatrixXd damped = hess + lambda * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LLT<Eigen::MatrixXd> llt(damped);
    if (llt.info() != Eigen::Success) {
      lambda *= opts.damping_growth;
      continue;
    }
    const Eigen::VectorXd step = llt.solve(-grad);
    bool step_hit = false;
    const Eigen::VectorXd cand = project(xi + step, step_hit);
    double cand_cost = 0.0;
    try {
      cand_cost = problem.cost(cand);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DomainViolation) throw;
      lambda *= opts.damping_growth;
      continue;
    }
    if (!(cand_cost <= cost)) {
      lambda *= opts.damping_growth;
      continue;
    }
    xi = cand;
    cost = cand_cost;
    grad = problem.gradient(xi);
    sol.cost_history.push_back(cost);
    lambda = std::max(lambda * opts.damping_shrink, 1e-15);
    last_projected = step_hit;
    consecutive = step_hit ? consecutive + 1 : 0;
    if (consecutive >= 2) {
      snapshot();
      sol.status = std::string(to_string(ErrorKind::BoundaryStuck));
      throw SolveFailure(ErrorKind::BoundaryStuck, "two consecutive steps projected onto the trust-ball boundary",
                         sol);
    }
  }

  snapshot();
  sol.converged = true;
  sol.hess_min_eig = jacobi_eigen<double>(problem.fd_hessian(xi)).values.minCoeff();
  return sol;
}

Eigen::VectorXd reference_state(const System& sys, const Eigen::VectorXd& x0, const Input& u, double s,
                                double step) {
  return flow(sys, x0, u, TimeGrid::covering(0.0, s, step)).back();
}

namespace {

TimeGrid mhe_window(double t, double T, double step) {
  require(T > 0.0 && t >= T - 1e-12, ErrorKind::InvalidArgument, "MHE needs t >= T > 0");
  return TimeGrid::covering(std::max(0.0, t - T), t, step);
}

MheSolution finish(const WindowProblem<double>& problem, const Eigen::VectorXd& initial, const SolverOptions& opts,
                   const Eigen::VectorXd& truth) {
  try {
    MheSolution sol = minimize_window(problem, initial, opts);
    sol.error_to_reference = (sol.xi_star - truth).norm();
    return sol;
  } catch (SolveFailure& f) {
    f.partial().error_to_reference = (f.partial().xi_star - truth).norm();
    throw;
  }
}

}  // namespace

MheSolution solve_mhe(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t, double T,
                      const Eigen::VectorXd& initial, const SolverOptions& opts, double step) {
  const TimeGrid window = mhe_window(t, T, step);
  const Eigen::VectorXd truth = reference_state(sys, x0, u, window.t_start(), step);
  return finish(WindowProblem<double>::clean(sys, u, window, truth), initial, opts, truth);
}

MheSolution solve_fie(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                      const Eigen::VectorXd& initial, const SolverOptions& opts, double step) {
  require(t >= step, ErrorKind::GridMismatch, "FIE window is shorter than one grid step");
  return solve_mhe(sys, x0, u, t, t, initial, opts, step);
}

MheSolution solve_pmhe(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t, double T,
                       const NoiseSignals<double>& eta, const Eigen::VectorXd& initial, const SolverOptions& opts,
                       double step) {
  const TimeGrid window = mhe_window(t, T, step);
  const Eigen::VectorXd truth = reference_state(sys, x0, u, window.t_start(), step);
  return finish(WindowProblem<double>::perturbed(sys, u, window, x0, eta), initial, opts, truth);
}

std::vector<MheSolution> rolling_estimate(const System& sys, const Eigen::VectorXd& x0, const Input& u,
                                          const std::vector<double>& t_grid, double T,
                                          const NoiseSignals<double>& eta, const Eigen::VectorXd& initial,
                                          const SolverOptions& opts, double step) {
  require(!t_grid.empty(), ErrorKind::InvalidArgument, "t_grid is empty");
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    require(t_grid[k] > t_grid[k - 1], ErrorKind::InvalidArgument, "t_grid must be increasing");
  }
  std::vector<MheSolution> out;
  out.reserve(t_grid.size());
  Eigen::VectorXd prev = initial;
  double prev_start = std::max(0.0, t_grid.front() - T);
  for (double t : t_grid) {
    const double start = std::max(0.0, t - T);
    Eigen::VectorXd init = prev;
    MheSolution sol;
    try {
      if (start > prev_start) init = flow(sys, prev, u, TimeGrid::covering(prev_start, start, step)).back();
      SolverOptions o = opts;
      o.ball_center = init;
      sol = solve_pmhe(sys, x0, u, t, T, eta, init, o, step);
    } catch (const SolveFailure& f) {
      sol = f.partial();
    } catch (const Error& e) {
      sol.t = t;
      sol.T = T;
      sol.xi_star = init;
      sol.status = std::string(to_string(e.kind()));
    }
    prev = sol.xi_star.allFinite() ? sol.xi_star : init;
    prev_start = start;
    out.push_back(std::move(sol));
  }
  return out;
}

MultistartReport multistart_uniqueness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                       double T, double R, int n_starts, std::uint64_t seed,
                                       const SolverOptions& opts, double step, int threads) {
  require(n_starts >= 1, ErrorKind::InvalidArgument, "need at least one start");
  const TimeGrid window = mhe_window(t, T, step);
  const Eigen::VectorXd truth = reference_state(sys, x0, u, window.t_start(), step);
  Rng rng(seed);
  std::vector<Eigen::VectorXd> starts{truth};
  for (int i = 1; i < n_starts; ++i) starts.push_back(truth + rng.in_ball(sys.n_x, R));
  return multistart_uniqueness(sys, x0, u, t, T, R, starts, opts, step, threads);
}

MultistartReport multistart_uniqueness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                       double T, double R, const std::vector<Eigen::VectorXd>& starts,
                                       const SolverOptions& opts, double step, int threads) {
  require(!starts.empty(), ErrorKind::InvalidArgument, "need at least one start");
  require(R > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  const TimeGrid window = mhe_window(t, T, step);
  const Eigen::VectorXd truth = reference_state(sys, x0, u, window.t_start(), step);
  const auto problem = WindowProblem<double>::clean(sys, u, window, truth);
  SolverOptions o = opts;
  o.ball_center = truth;
  o.ball_radius = R;

  MultistartReport rep;
  rep.t = t;
  rep.T = T;
  rep.R = R;
  rep.starts = starts;
  rep.solutions = parallel_map(starts.size(), threads, [&](std::size_t i) {
    MheSolution sol;
    try {
      sol = minimize_window(problem, starts[i], o);
    } catch (const SolveFailure& f) {
      sol = f.partial();
    } catch (const Error& e) {
      sol.t = t;
      sol.T = T;
      sol.xi_star = starts[i];
      sol.status = std::string(to_string(e.kind()));
    }
    sol.error_to_reference = (sol.xi_star - truth).norm();
    return sol;
  });

  for (const auto& s : rep.solutions) {
    if (!s.converged) continue;
    rep.cluster_radius =
        std::max(rep.cluster_radius, 10.0 * s.grad_tol_effective / std::max(s.hess_min_eig, 1e-3));
  }
  for (const auto& s : rep.solutions) {
    if (!s.converged) {
      rep.membership.push_back(-1);
      ++rep.failures;
      continue;
    }
    int found = -1;
    for (std::size_t c = 0; c < rep.clusters.size(); ++c) {
      if ((s.xi_star - rep.clusters[c]).norm() <= rep.cluster_radius) {
        found = static_cast<int>(c);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(rep.clusters.size());
      rep.clusters.push_back(s.xi_star);
    }
    rep.membership.push_back(found);
  }
  rep.unique = rep.clusters.size() == 1;
  return rep;
}

}  // namespace obsmhe
