#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obsmhe/cost.hpp"
#include "obsmhe/grammian.hpp"

namespace obsmhe {

struct SolverOptions {
  /// Center of the trust ball; unset means the initial point.
  std::optional<Eigen::VectorXd> ball_center;
  double ball_radius = 0.2;
  int max_iters = 50;
  /// Stationarity threshold, scaled by max(1, cost).
  double grad_tol = 1e-9;
  double damping = 1e-3;
  double damping_growth = 10.0;
  double damping_shrink = 0.1;
  HessianMode hessian = HessianMode::GaussNewton;

  void validate() const;
};

struct MheSolution {
  double t = 0.0;
  double T = 0.0;
  Eigen::VectorXd xi_star;
  double cost = 0.0;
  double grad_norm = 0.0;
  /// grad_tol * max(1, cost) at the returned point.
  double grad_tol_effective = 0.0;
  /// Smallest eigenvalue of the full_fd Hessian at xi_star.
  double hess_min_eig = 0.0;
  int iterations = 0;
  bool converged = false;
  bool projected = false;
  std::optional<double> error_to_reference;
  /// Cost after every accepted step, starting with the initial point.
  std::vector<double> cost_history;
  /// "ok" or the ErrorKind name of the failure.
  std::string status = "ok";
};

/// Raised by the solvers on MaxItersExceeded / BoundaryStuck; carries the last iterate.
class SolveFailure : public Error {
 public:
  SolveFailure(ErrorKind kind, const std::string& what, MheSolution partial)
      : Error(kind, what), partial_(std::move(partial)) {}
  const MheSolution& partial() const noexcept { return partial_; }
  MheSolution& partial() noexcept { return partial_; }

 private:
  MheSolution partial_;
};

/// Levenberg-damped Newton on a window problem, iterates projected radially
/// onto the closed ball B(center, R). Steps that raise the cost are rejected.
MheSolution minimize_window(const WindowProblem<double>& problem, const Eigen::VectorXd& initial,
                            const SolverOptions& opts);

/// Reference state x(s) of the clean flow from (0, x0).
Eigen::VectorXd reference_state(const System& sys, const Eigen::VectorXd& x0, const Input& u, double s, double step);

/// min over xi of l(t-T, t, x(t-T), xi, u), started at `initial`.
MheSolution solve_mhe(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t, double T,
                      const Eigen::VectorXd& initial, const SolverOptions& opts, double step);

/// Full-information problem: window [0, t], reference x0.
MheSolution solve_fie(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                      const Eigen::VectorXd& initial, const SolverOptions& opts, double step);

/// min over xi of l~(t-T, t, xi, u, eta); the error is measured against the
/// unperturbed x(t-T).
MheSolution solve_pmhe(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t, double T,
                       const NoiseSignals<double>& eta, const Eigen::VectorXd& initial, const SolverOptions& opts,
                       double step);

/// PMHE at every t in `t_grid`. The first window starts from `initial`; later
/// windows start from the previous solution propagated by the flow, with the
/// trust ball centered there. Failures are recorded in `status` and the scan continues.
std::vector<MheSolution> rolling_estimate(const System& sys, const Eigen::VectorXd& x0, const Input& u,
                                          const std::vector<double>& t_grid, double T,
                                          const NoiseSignals<double>& eta, const Eigen::VectorXd& initial,
                                          const SolverOptions& opts, double step);

struct MultistartReport {
  double t = 0.0;
  double T = 0.0;
  double R = 0.0;
  std::vector<Eigen::VectorXd> starts;
  std::vector<MheSolution> solutions;
  /// Representative point of each cluster of converged solutions.
  std::vector<Eigen::VectorXd> clusters;
  /// Cluster index per start, -1 for starts that did not converge.
  std::vector<int> membership;
  double cluster_radius = 0.0;
  std::size_t failures = 0;
  bool unique = false;
};

/// Solves MHE from `n_starts` starts in B(x(t-T), R): the center first, then
/// seeded ball samples. Converged points within the cluster radius
/// 10 * tol / max(hess_min_eig, 1e-3) of a representative share its cluster.
MultistartReport multistart_uniqueness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                       double T, double R, int n_starts, std::uint64_t seed,
                                       const SolverOptions& opts, double step, int threads = 1);

/// Same, from explicit starting points.
MultistartReport multistart_uniqueness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                       double T, double R, const std::vector<Eigen::VectorXd>& starts,
                                       const SolverOptions& opts, double step, int threads = 1);

}  // namespace obsmhe
