#pragma once

#include <cmath>
#include <utility>

#include "obsmhe/core.hpp"
#include "obsmhe/signal.hpp"
#include "obsmhe/system.hpp"

namespace obsmhe::bearing {

/// Minimum landmark distance at which the bearing output is defined.
inline constexpr double kDomainRadius = 1e-9;

/// Planar single integrator  x' = u  observed through the unit bearing
/// y = (l - x) / ||l - x|| to a known landmark l.
template <typename Scalar>
ControlSystem<Scalar> bearing_system(const Vector<Scalar>& landmark) {
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;
  require(landmark.size() == 2, ErrorKind::InvalidArgument, "landmark must be planar");
  ControlSystem<Scalar> sys;
  sys.n_x = 2;
  sys.n_u = 2;
  sys.n_y = 2;
  sys.f = [](const Vec&, const Vec& u) -> Vec { return u; };
  sys.df_dx = [](const Vec&, const Vec&) -> Mat { return Mat::Zero(2, 2); };
  sys.h = [landmark](const Vec& x, const Vec&) -> Vec {
    const Vec d = landmark - x;
    const Scalar r = d.norm();
    require(r >= Scalar(kDomainRadius), ErrorKind::DomainViolation, "bearing undefined at the landmark");
    return d / r;
  };
  // H(x) = (1/r^3) [[-e2^2, e1 e2], [e1 e2, -e1^2]] with e = x - l.
  sys.dh_dx = [landmark](const Vec& x, const Vec&) -> Mat {
    const Vec e = x - landmark;
    const Scalar r = e.norm();
    require(r >= Scalar(kDomainRadius), ErrorKind::DomainViolation, "bearing undefined at the landmark");
    const Scalar r3 = r * r * r;
    Mat jac(2, 2);
    jac << -e(1) * e(1), e(0) * e(1), e(0) * e(1), -e(0) * e(0);
    return jac / r3;
  };
  sys.domain_guard = [landmark](const Vec& x) { return (x - landmark).norm() >= Scalar(kDomainRadius); };
  return sys;
}

/// Landmark, initial position and the derived polar coordinates of x0 about l.
struct Scenario {
  Eigen::Vector2d landmark;
  Eigen::Vector2d x0;
  double r0 = 0.0;
  /// Polar angle of x0 - l, so that l + r0 (cos psi0, sin psi0) = x0.
  double psi0 = 0.0;

  Scenario(const Eigen::Vector2d& l, const Eigen::Vector2d& x)
      : landmark(l), x0(x), r0((l - x).norm()), psi0(std::atan2(x(1) - l(1), x(0) - l(0))) {
    require(r0 > kDomainRadius, ErrorKind::InvalidArgument, "x0 must differ from the landmark");
  }
};

/// u_cst(s) = sigma (l - x0): radial motion along the landmark line.
template <typename Scalar>
InputSignal<Scalar> u_cst(const Scenario& sc, Scalar sigma) {
  const Vector<Scalar> value = (sigma * (sc.landmark - sc.x0).cast<Scalar>()).eval();
  using std::abs;
  return InputSignal<Scalar>(2, {{0.0, [value](Scalar) { return value; }}}, abs(sigma) * Scalar(sc.r0));
}

/// u_circ(s) = w r0 (-sin(w s + psi0), cos(w s + psi0)): circle of radius r0 about l.
template <typename Scalar>
InputSignal<Scalar> u_circ(const Scenario& sc, Scalar omega) {
  require(omega > Scalar(0), ErrorKind::InvalidArgument, "omega must be positive");
  const Scalar r0 = Scalar(sc.r0);
  const Scalar psi0 = Scalar(sc.psi0);
  auto eval = [omega, r0, psi0](Scalar s) {
    using std::cos;
    using std::sin;
    const Scalar a = omega * s + psi0;
    Vector<Scalar> v(2);
    v << -omega * r0 * sin(a), omega * r0 * cos(a);
    return v;
  };
  return InputSignal<Scalar>(2, {{0.0, eval}}, omega * r0);
}

/// Outward logarithmic spiral about l, radius r0 e^{alpha s}:
/// u_spi(s) = r0 e^{alpha s} (w (-sin, cos) + alpha (cos, sin))(w s + psi0).
/// Unbounded in s, so no bound is declared.
template <typename Scalar>
InputSignal<Scalar> u_spi(const Scenario& sc, Scalar omega, Scalar alpha) {
  require(omega > Scalar(0) && alpha > Scalar(0), ErrorKind::InvalidArgument, "omega and alpha must be positive");
  const Scalar r0 = Scalar(sc.r0);
  const Scalar psi0 = Scalar(sc.psi0);
  auto eval = [omega, alpha, r0, psi0](Scalar s) {
    using std::cos;
    using std::exp;
    using std::sin;
    const Scalar a = omega * s + psi0;
    const Scalar g = r0 * exp(alpha * s);
    Vector<Scalar> v(2);
    v << g * (-omega * sin(a) + alpha * cos(a)), g * (omega * cos(a) + alpha * sin(a));
    return v;
  };
  return InputSignal<Scalar>(2, {{0.0, eval}}, std::nullopt);
}

struct EigenPair {
  double minus = 0.0;
  double plus = 0.0;
};

/// Grammian eigenvalues for u_circ: (1 / 2 r0^2) [T -/+ |sin(w T)| / w]; independent of t.
EigenPair circ_eigs(double T, double omega, double r0);

/// Closed-form spiral eigenvalues exactly as published:
/// 1 / (4 alpha r(t-T)^2) [exp(2 T alpha) - 1 -/+ b(alpha, w, T)],  r(t-T) = r0 exp(alpha (t-T)).
/// Note: this expression is the Grammian of the spiral scaled by exp(2 alpha T);
/// `spi_eigs_exact` is the value the numerical Grammian converges to.
EigenPair spi_eigs(double t, double T, double omega, double alpha, double r0);

/// Grammian eigenvalues of the outward spiral on [t-T, t]:
/// 1 / (4 r(t-T)^2) [(1 - e^{-2 alpha T}) / alpha -/+ sqrt(1 - 2 e^{-2 alpha T} cos(2 w T) + e^{-4 alpha T}) / sqrt(alpha^2 + w^2)].
EigenPair spi_eigs_exact(double t, double T, double omega, double alpha, double r0);

/// Horizon above which the published lower bound on the spiral's smaller
/// eigenvalue is positive: (1 / 2 alpha) ln((sqrt(a^2 + w^2) + a) / (sqrt(a^2 + w^2) - a)).
double spi_positivity_horizon(double omega, double alpha);

}  // namespace obsmhe::bearing
