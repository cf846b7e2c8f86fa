#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

#include "obsmhe/bearing.hpp"
#include "obsmhe/signal.hpp"
#include "obsmhe/system.hpp"

namespace testing {

// xorshift64* kept separate from the library Rng so property tests do not
// share a generator with the code they check.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull) {
    if (s_ == 0) s_ = 1;
  }

  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1Dull;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  Eigen::VectorXd vec(int n, double a, double b) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform(a, b);
    return v;
  }

  Eigen::MatrixXd symmetric(int n, double scale) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = uniform(-scale, scale);
    return (m + m.transpose()) / 2.0;
  }

 private:
  std::uint64_t s_;
};

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

using System = obsmhe::ControlSystem<double>;
using Input = obsmhe::InputSignal<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline System bearing_at_origin() { return obsmhe::bearing::bearing_system<double>(v2(0.0, 0.0)); }

// Damped forced pendulum, y = (x1, sin x2): a nonlinear system with a
// state-dependent Jacobian.
inline System pendulum() {
  System sys;
  sys.n_x = 2;
  sys.n_u = 1;
  sys.n_y = 2;
  sys.f = [](const Vec& x, const Vec& u) { return v2(x(1), -std::sin(x(0)) - 0.3 * x(1) + u(0)); };
  sys.df_dx = [](const Vec& x, const Vec&) {
    Mat a(2, 2);
    a << 0.0, 1.0, -std::cos(x(0)), -0.3;
    return a;
  };
  sys.h = [](const Vec& x, const Vec&) { return v2(x(0), std::sin(x(1))); };
  sys.dh_dx = [](const Vec& x, const Vec&) {
    Mat c(2, 2);
    c << 1.0, 0.0, 0.0, std::cos(x(1));
    return c;
  };
  return sys;
}

// x' = a x, y = x.
inline System scalar_linear(double a) {
  System sys;
  sys.n_x = 1;
  sys.n_u = 1;
  sys.n_y = 1;
  sys.f = [a](const Vec& x, const Vec&) { return Vec(a * x); };
  sys.df_dx = [a](const Vec&, const Vec&) { return Mat::Constant(1, 1, a); };
  sys.h = [](const Vec& x, const Vec&) { return x; };
  sys.dh_dx = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  return sys;
}

// Grammian of the bearing system along the closed-form circle of radius r0
// about the origin, by trapezoid quadrature on m panels. Phi = I, so the
// integrand is the projection (I - e e^T) / r0^2.
inline Mat circle_grammian(double T, double omega, double r0, double psi_start, int m = 200000) {
  Mat c = Mat::Zero(2, 2);
  const double dt = T / m;
  for (int k = 0; k <= m; ++k) {
    const double th = psi_start + omega * k * dt;
    Vec e = v2(std::cos(th), std::sin(th));
    const Mat p = (Mat::Identity(2, 2) - e * e.transpose()) / (r0 * r0);
    c += (k == 0 || k == m ? 0.5 : 1.0) * dt * p;
  }
  return c;
}

}  // namespace testing
