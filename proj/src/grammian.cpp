#include "obsmhe/grammian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obsmhe/cost.hpp"
#include "obsmhe/jacobi.hpp"
#include "obsmhe/ode.hpp"
#include "obsmhe/parallel.hpp"
#include "obsmhe/random.hpp"

namespace obsmhe {

namespace {

void check_t_grid(double T, const std::vector<double>& t_grid) {
  require(T > 0.0, ErrorKind::InvalidArgument, "horizon T must be positive");
  require(!t_grid.empty(), ErrorKind::InvalidArgument, "t_grid is empty");
  for (double t : t_grid) require(t >= T - 1e-12, ErrorKind::InvalidArgument, "t_grid entries must be >= T");
}

double window_tol(const CertifyOptions& opts, double max_eig) {
  return opts.singular_tol ? *opts.singular_tol : 1e-8 * max_eig;
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::NotWeaklyPersistent: return "NotWeaklyPersistent";
    case Verdict::WeaklyPersistentSampled: return "WeaklyPersistentSampled";
    case Verdict::WeaklyRegularlyPersistentSampled: return "WeaklyRegularlyPersistentSampled";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "Unknown";
}

GrammianReport observability_grammian(const System& sys, double t, double T, const Eigen::VectorXd& center,
                                      const Input& u, double step) {
  require(T > 0.0 && t >= T - 1e-12, ErrorKind::InvalidArgument, "Grammian needs t >= T > 0");
  const TimeGrid window = TimeGrid::covering(std::max(0.0, t - T), t, step);
  GrammianReport rep;
  rep.t = t;
  rep.T = T;
  rep.center = center;
  rep.C = WindowProblem<double>::grammian_along(sys, u, window, center);
  const SymmetricEigen<double> eig = jacobi_eigen(rep.C);
  rep.eigenvalues = eig.values;
  rep.eigenvectors = eig.vectors;
  rep.min_eig = eig.values.minCoeff();
  rep.max_eig = eig.values.maxCoeff();
  return rep;
}

std::vector<Eigen::VectorXd> window_centers(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                            const std::vector<double>& t_grid, double step) {
  check_t_grid(T, t_grid);
  double last = 0.0;
  for (double t : t_grid) last = std::max(last, std::max(0.0, t - T));
  const Trajectory<double> ref = flow(sys, x0, u, TimeGrid::covering(0.0, last, step));
  std::vector<Eigen::VectorXd> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) out.push_back(ref.at_time(std::max(0.0, t - T)));
  return out;
}

std::vector<GrammianReport> grammian_scan(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                          const std::vector<double>& t_grid, double step, int threads) {
  const auto centers = window_centers(sys, x0, u, T, t_grid, step);
  return parallel_map(t_grid.size(), threads, [&](std::size_t k) {
    return observability_grammian(sys, t_grid[k], T, centers[k], u, step);
  });
}

PersistenceCertificate certify_weak_persistence(const System& sys, const Eigen::VectorXd& x0, const Input& u,
                                                double T, const std::vector<double>& t_grid, double step,
                                                const CertifyOptions& opts) {
  require(opts.ball_radius > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  const auto reports = grammian_scan(sys, x0, u, T, t_grid, step, opts.threads);

  PersistenceCertificate cert;
  cert.T = T;
  cert.t_grid = t_grid;
  double inf_min = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  std::optional<std::size_t> first_singular;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    cert.min_eig.push_back(r.min_eig);
    cert.max_eig.push_back(r.max_eig);
    const double tol = window_tol(opts, r.max_eig);
    cert.singular_tol.push_back(tol);
    if (r.min_eig <= tol && !first_singular) first_singular = k;
    if (r.min_eig < inf_min) {
      inf_min = r.min_eig;
      worst = k;
    }
  }
  cert.mu_hat = 2.0 * inf_min;
  cert.worst_t = t_grid[worst];
  cert.norm_decreasing = reports.size() > 1;
  for (std::size_t k = 1; k < reports.size(); ++k) {
    if (!(cert.max_eig[k] < cert.max_eig[k - 1])) cert.norm_decreasing = false;
  }

  if (!first_singular) {
    cert.verdict = Verdict::WeaklyPersistentSampled;
    return cert;
  }

  const auto& r = reports[*first_singular];
  const TimeGrid window = TimeGrid::covering(std::max(0.0, r.t - T), r.t, step);
  Witness wit;
  wit.t = r.t;
  wit.direction = r.eigenvectors.col(0);
  wit.displacement = 0.01 * opts.ball_radius;
  const auto problem = WindowProblem<double>::clean(sys, u, window, r.center);
  try {
    wit.cost = problem.cost(r.center + wit.displacement * wit.direction);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DomainViolation) throw;
    wit.displacement = -wit.displacement;
    wit.cost = problem.cost(r.center + wit.displacement * wit.direction);
  }
  wit.flat = wit.cost < 1e-10;
  cert.verdict = wit.flat ? Verdict::NotWeaklyPersistent : Verdict::Inconclusive;
  cert.witness = wit;
  return cert;
}

PersistenceCertificate certify_weak_regular_persistence(const System& sys, const Eigen::VectorXd& x0,
                                                        const Input& u, double T, const std::vector<double>& t_grid,
                                                        double step, const CertifyOptions& opts) {
  require(opts.mu_threshold > 0.0, ErrorKind::InvalidArgument, "mu_threshold must be positive");
  PersistenceCertificate cert = certify_weak_persistence(sys, x0, u, T, t_grid, step, opts);
  cert.mu_threshold = opts.mu_threshold;
  if (cert.verdict != Verdict::WeaklyPersistentSampled) return cert;
  cert.boundedness = check_regular_boundedness(sys, x0, u, T, opts.ball_radius, t_grid, opts.n_ball_samples,
                                               opts.seed, step, opts.threads);
  if (cert.mu_hat >= opts.mu_threshold && cert.boundedness->passed) {
    cert.verdict = Verdict::WeaklyRegularlyPersistentSampled;
  }
  return cert;
}

BoundednessReport check_regular_boundedness(const System& sys, const Eigen::VectorXd& x0, const Input& u, double T,
                                            double R, const std::vector<double>& t_grid, int n_ball_samples,
                                            std::uint64_t seed, double step, int threads) {
  require(R > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  require(n_ball_samples >= 0, ErrorKind::InvalidArgument, "sample count must be non-negative");
  const auto centers = window_centers(sys, x0, u, T, t_grid, step);
  const int n = sys.n_x;

  const auto maxima = parallel_map(t_grid.size(), threads, [&](std::size_t k) {
    const TimeGrid window = TimeGrid::covering(std::max(0.0, t_grid[k] - T), t_grid[k], step);
    Rng rng(seed, k);
    std::vector<Eigen::VectorXd> starts;
    for (int i = 0; i < n_ball_samples; ++i) starts.push_back(centers[k] + rng.in_ball(n, R));
    for (int i = 0; i < n; ++i) {
      starts.push_back(centers[k] + R * Eigen::VectorXd::Unit(n, i));
      starts.push_back(centers[k] - R * Eigen::VectorXd::Unit(n, i));
    }
    double best = 0.0;
    for (const auto& xi : starts) {
      const Trajectory<double> traj = flow(sys, xi, u, window);
      for (const auto& x : traj.states) {
        const double norm = x.norm();
        require(std::isfinite(norm) && norm <= kOverflowGuard, ErrorKind::Unbounded,
                "trajectory norm exceeds the overflow guard in window t = " + num(t_grid[k]));
        best = std::max(best, norm);
      }
    }
    return best;
  });

  BoundednessReport rep;
  rep.T = T;
  rep.R = R;
  rep.t_grid = t_grid;
  rep.window_max = maxima;
  rep.trajectories = t_grid.size() * static_cast<std::size_t>(n_ball_samples + 2 * n);
  rep.L_hat = *std::max_element(maxima.begin(), maxima.end());
  rep.passed = std::isfinite(rep.L_hat);
  rep.growing = maxima.size() > 1 && maxima.back() > maxima.front();
  for (std::size_t k = 1; k < maxima.size(); ++k) {
    if (maxima[k] < maxima[k - 1]) rep.growing = false;
  }
  return rep;
}

}  // namespace obsmhe
