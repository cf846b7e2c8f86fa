#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obsmhe/signal.hpp"
#include "obsmhe/system.hpp"

namespace obsmhe {

using System = ControlSystem<double>;
using Input = InputSignal<double>;

/// Observability Grammian C(t, T, center, u) = int_{t-T}^{t} Phi^T H^T H Phi ds
/// along the flow from (t - T, center), with its spectrum.
struct GrammianReport {
  double t = 0.0;
  double T = 0.0;
  Eigen::VectorXd center;
  Eigen::MatrixXd C;
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // column k pairs with eigenvalues(k)
  double min_eig = 0.0;
  double max_eig = 0.0;
};

GrammianReport observability_grammian(const System& sys, double t, double T, const Eigen::VectorXd& center,
                                      const Input& u, double step);

/// Reference states x(t - T) for every t in `t_grid`, from one flow started at (0, x0).
std::vector<Eigen::VectorXd> window_centers(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                            const std::vector<double>& t_grid, double step);

/// Grammians at x(t - T) for every t in `t_grid`; windows run on `threads` workers.
std::vector<GrammianReport> grammian_scan(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                          const std::vector<double>& t_grid, double step, int threads = 1);

enum class Verdict {
  NotWeaklyPersistent,
  WeaklyPersistentSampled,
  WeaklyRegularlyPersistentSampled,
  /// Some window is numerically singular but the cost is not flat along its null direction.
  Inconclusive,
};

std::string to_string(Verdict v);

struct BoundednessReport {
  double T = 0.0;
  double R = 0.0;
  std::vector<double> t_grid;
  /// Largest state norm seen per window.
  std::vector<double> window_max;
  double L_hat = 0.0;
  std::size_t trajectories = 0;
  bool passed = false;
  /// Per-window maxima are non-decreasing and the last exceeds the first.
  bool growing = false;
};

/// Flat-cost evidence along the near-null eigenvector of the worst window.
struct Witness {
  double t = 0.0;
  Eigen::VectorXd direction;
  double displacement = 0.0;
  double cost = 0.0;
  bool flat = false;
};

struct PersistenceCertificate {
  double T = 0.0;
  std::vector<double> t_grid;
  std::vector<double> min_eig;
  std::vector<double> max_eig;
  /// Singular threshold actually applied per window.
  std::vector<double> singular_tol;
  Verdict verdict = Verdict::Inconclusive;
  /// 2 * inf over t_grid of min_eig.
  double mu_hat = 0.0;
  std::optional<double> mu_threshold;
  /// Window with the smallest min_eig.
  double worst_t = 0.0;
  std::optional<Witness> witness;
  std::optional<BoundednessReport> boundedness;
  /// max_eig is strictly decreasing over t_grid.
  bool norm_decreasing = false;
  std::string label = "sampled evidence, not a proof";
};

struct CertifyOptions {
  /// Absolute singular threshold; unset means 1e-8 * max_eig of each window.
  std::optional<double> singular_tol;
  double mu_threshold = 1e-6;
  /// Ball radius R: boundedness samples and the witness displacement 0.01 R.
  double ball_radius = 0.1;
  int n_ball_samples = 8;
  std::uint64_t seed = 0;
  int threads = 1;
};

PersistenceCertificate certify_weak_persistence(const System& sys, const Eigen::VectorXd& x0, const Input& u,
                                                double T, const std::vector<double>& t_grid, double step,
                                                const CertifyOptions& opts = {});

PersistenceCertificate certify_weak_regular_persistence(const System& sys, const Eigen::VectorXd& x0,
                                                        const Input& u, double T, const std::vector<double>& t_grid,
                                                        double step, const CertifyOptions& opts = {});

/// Samples xi in B(x(t-T), R) (seeded, plus the 2 n_x axis points) and records
/// the largest ||phi_f(s; t-T, xi, u)|| over the window nodes.
BoundednessReport check_regular_boundedness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                            double R, const std::vector<double>& t_grid, int n_ball_samples,
                                            std::uint64_t seed, double step, int threads = 1);

inline constexpr double kOverflowGuard = 1e12;

}  // namespace obsmhe
