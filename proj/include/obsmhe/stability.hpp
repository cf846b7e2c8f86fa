#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obsmhe/grammian.hpp"

namespace obsmhe {

/// Which noise channels the audit perturbs.
struct NoiseChannels {
  bool v = true;
  bool w = true;
};

struct NonuniformOptions {
  /// Absolute singular threshold; unset means 1e-8 * max_eig.
  std::optional<double> singular_tol;
  /// Seeded process-noise draws of magnitude <= nu (the zero draw is always included).
  int n_noise_samples = 4;
  std::uint64_t seed = 0;
  /// Hold length of the sampled noise; 0 means ten grid steps.
  double noise_step = 0.0;
};

/// Per-window constants of the first-order error bound
/// ||xi*_t(eta) - x(t-T)|| <= K_t ||eta||_{t,T}.
struct NonuniformAudit {
  double t = 0.0;
  double T = 0.0;
  double nu = 0.0;
  double mu_t = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double K = 0.0;
};

/// mu_t = min_eig C(t, T, x(t-T), u); C1 = 2T sup ||H Phi||;
/// C2 = 2T sup ||H Phi|| ||H(x~)|| ||d_w x~||, with ||d_w x~(s)|| bounded by
/// int_0^s ||Phi~(s) Phi~(tau)^{-1}|| dtau; K_t = (C1 + C2) / (2 mu_t).
NonuniformAudit audit_nonuniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double t,
                                           double T, double nu, double step, const NonuniformOptions& opts = {});

struct UniformOptions {
  std::uint64_t seed = 0;
  /// Ball samples per window besides the center.
  int n_ball_samples = 3;
  NoiseChannels channels;
  /// Hold length of the sampled noise; 0 means ten grid steps.
  double noise_step = 0.0;
  /// Step of the central differences of the Hessian.
  double fd_delta = 1e-3;
  std::optional<double> singular_tol;
  int threads = 1;
};

struct StabilityAudit {
  double T = 0.0;
  double R = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  std::vector<double> t_grid;
  std::vector<double> min_eig;
  NoiseChannels channels;
  double mu_hat = 0.0;
  double a1_hat = 0.0;
  double a2_hat = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double g3_hat = 0.0;
  bool condition1_ok = false;  // g1 / mu <= alpha
  bool condition2_ok = false;  // g2 / mu <= R (1 - alpha)
  bool conditions_ok = false;
  /// g3 / (mu - g1); set only when mu > g1.
  std::optional<double> bound_coefficient;
  /// bound_coefficient * nu.
  std::optional<double> predicted_bound;
  std::string label = "sampled estimates";
};

/// Raised when a sufficient condition fails; carries the full audit.
class ConditionsFailure : public Error {
 public:
  ConditionsFailure(const std::string& what, StabilityAudit audit)
      : Error(ErrorKind::ConditionsFailed, what), audit_(std::move(audit)) {}
  const StabilityAudit& audit() const noexcept { return audit_; }

 private:
  StabilityAudit audit_;
};

/// Computes the sampled constants and conditions without enforcing them.
StabilityAudit evaluate_uniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                          const std::vector<double>& t_grid, double R, double nu, double alpha,
                                          double step, const UniformOptions& opts = {});

/// As evaluate_uniform_stability, throwing ConditionsFailure if either condition fails.
StabilityAudit audit_uniform_stability(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                       const std::vector<double>& t_grid, double R, double nu, double alpha,
                                       double step, const UniformOptions& opts = {});

}  // namespace obsmhe
