#include <doctest.h>

#include <cmath>

#include "obsmhe/bearing.hpp"
#include "obsmhe/noise.hpp"
#include "obsmhe/ode.hpp"
#include "support.hpp"

using namespace obsmhe;
using namespace testing;

namespace {

Input const_input(double a, double b) { return Input::constant(v2(a, b)); }

}  // namespace

TEST_CASE("single integrator with constant input") {
  const auto sys = bearing::bearing_system<double>(v2(5.0, 5.0));
  const auto traj = flow(sys, v2(0.0, 0.0), const_input(1.0, 0.0), TimeGrid::covering(0.0, 1.0, 0.01));
  CHECK(traj.states.front() == v2(0.0, 0.0));
  CHECK(std::abs(traj.back()(0) - 1.0) <= 1e-14);
  CHECK(traj.back()(1) == 0.0);
  CHECK(traj.states.size() == 101);
}

TEST_CASE("circular input keeps the range to the landmark") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto traj = flow(bearing_at_origin(), v2(1.0, 0.0), bearing::u_circ<double>(sc, 1.0),
                         TimeGrid::covering(0.0, 10.0, 0.01));
  double worst = 0.0;
  for (const auto& x : traj.states) worst = std::max(worst, std::abs(x.norm() - 1.0));
  CHECK(worst <= 1e-8);
}

TEST_CASE("RK4 converges at fourth order on the spiral") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto u = bearing::u_spi<double>(sc, 1.0, 0.3);
  const auto sys = bearing_at_origin();
  auto end = [&](double h) { return flow(sys, v2(1.0, 0.0), u, TimeGrid::covering(0.0, 2.0, h)).back(); };
  const Vec a = end(0.2);
  const Vec b = end(0.1);
  const Vec c = end(0.05);
  const double ratio = (a - b).norm() / (b - c).norm();
  CHECK(ratio == doctest::Approx(16.0).epsilon(0.15));
}

TEST_CASE("stm of the bearing system is the identity") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto traj = stm(bearing_at_origin(), v2(1.0, 0.0), bearing::u_circ<double>(sc, 1.0),
                        TimeGrid::covering(0.0, 3.0, 0.01));
  for (const auto& phi : traj.stm) CHECK(phi == Mat::Identity(2, 2));
}

TEST_CASE("stm over an empty interval") {
  const auto traj = stm(pendulum(), v2(0.4, -0.2), Input::constant(Vec::Constant(1, 0.5)),
                        TimeGrid::covering(1.5, 1.5, 0.01));
  REQUIRE(traj.stm.size() == 1);
  CHECK(traj.stm[0] == Mat::Identity(2, 2));
  CHECK(traj.states[0] == v2(0.4, -0.2));
}

TEST_CASE("stm of a scalar linear system") {
  const auto traj = stm(scalar_linear(-0.5), Vec(Vec::Constant(1, 1.0)), Input::zero(1), TimeGrid::covering(1.0, 3.0, 0.01));
  CHECK(std::abs(traj.stm.back()(0, 0) - std::exp(-1.0)) <= 1e-8);
}

TEST_CASE("zero process noise reproduces the flow bit for bit") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto u = bearing::u_circ<double>(sc, 1.0);
  const auto grid = TimeGrid::covering(0.0, 4.0, 0.01);
  const auto w = SampledSignal<double>::zero(2, 0.0, 4.0, 0.1);
  const auto a = flow(bearing_at_origin(), v2(1.0, 0.0), u, grid);
  const auto b = perturbed_flow(bearing_at_origin(), v2(1.0, 0.0), u, w, grid);
  for (std::size_t k = 0; k < a.states.size(); ++k) CHECK(a.states[k] == b.states[k]);
}

TEST_CASE("constant process noise accumulates linearly") {
  const double c = 0.37;
  const auto w = constant_signal(v2(c, 0.0), 2.0, 0.1);
  const auto traj = perturbed_flow(bearing::bearing_system<double>(v2(9.0, 9.0)), v2(1.0, 2.0), const_input(0.0, 0.0),
                                   w, TimeGrid::covering(0.0, 2.0, 0.01));
  CHECK(std::abs(traj.back()(0) - (1.0 + 2.0 * c)) <= 1e-13);
  CHECK(traj.back()(1) == 2.0);
}

TEST_CASE("sinusoidal process noise shifts the circle by its integral") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto u = bearing::u_circ<double>(sc, 1.0);
  const double t = 3.0;
  const double hold = 0.05;
  const auto w = sinusoid_signal(v2(1e-3, -2e-3), 0.7, 0.3, t, hold);
  const auto grid = TimeGrid::covering(0.0, t, 0.01);
  const auto clean = flow(bearing_at_origin(), v2(1.0, 0.0), u, grid);
  const auto pert = perturbed_flow(bearing_at_origin(), v2(1.0, 0.0), u, w, grid);
  // f does not depend on x, so the shift is exactly the integral of the held samples.
  Vec integral = Vec::Zero(2);
  for (Eigen::Index j = 0; j < w.size(); ++j) integral += hold * w.samples().col(j);
  const Vec shift = pert.back() - clean.back();
  CHECK((shift - integral).norm() <= 1e-14);
  CHECK(shift.norm() <= t * w.sup_norm() + 1e-15);
}

TEST_CASE("noise sensitivity trivial cases") {
  const auto sys = bearing::bearing_system<double>(v2(9.0, 9.0));
  const auto grid = TimeGrid::covering(0.0, 2.0, 0.01);
  const auto w = SampledSignal<double>::zero(2, 0.0, 2.0, 0.1);

  const auto z0 = noise_sensitivity(sys, v2(0.0, 0.0), const_input(0.2, 0.1), w,
                                    SampledSignal<double>::zero(2, 0.0, 2.0, 0.1), grid);
  for (const auto& z : z0.sensitivity) CHECK(z.norm() == 0.0);

  const auto z1 = noise_sensitivity(sys, v2(0.0, 0.0), const_input(0.2, 0.1), w, constant_signal(v2(1.0, 0.0), 2.0, 0.1),
                                    grid);
  CHECK(std::abs(z1.sensitivity.back()(0) - 2.0) <= 1e-13);
  CHECK(z1.sensitivity.back()(1) == 0.0);
}

TEST_CASE("noise sensitivity matches a central difference in w") {
  const auto sys = pendulum();
  const Input u(1, {{0.0, [](double s) { return Vec::Constant(1, std::cos(1.3 * s)); }}});
  const auto grid = TimeGrid::covering(0.0, 3.0, 0.01);
  Rng rng(11);
  const auto w = uniform_signal(2, 0.05, 3.0, 0.1, rng);
  const auto dw = uniform_signal(2, 1.0, 3.0, 0.1, rng);
  const double eps = 1e-4;
  const auto z = noise_sensitivity(sys, v2(0.3, 0.1), u, w, dw, grid);
  const auto xp = perturbed_flow(sys, v2(0.3, 0.1), u, w.plus(dw, eps), grid);
  const auto xm = perturbed_flow(sys, v2(0.3, 0.1), u, w.plus(dw, -eps), grid);
  double worst = 0.0;
  for (std::size_t k = 0; k < z.states.size(); ++k) {
    const Vec fd = (xp.states[k] - xm.states[k]) / (2.0 * eps);
    worst = std::max(worst, (fd - z.sensitivity[k]).norm());
  }
  CHECK(worst <= 1e-7);
  // states of the sensitivity run are the perturbed flow itself
  CHECK(z.back() == perturbed_flow(sys, v2(0.3, 0.1), u, w, grid).back());
}

TEST_CASE("noise sensitivity is linear in the direction") {
  const auto sys = pendulum();
  const auto u = Input::constant(Vec::Constant(1, 0.2));
  const auto grid = TimeGrid::covering(0.0, 2.0, 0.01);
  Rng rng(5);
  const auto w = uniform_signal(2, 0.1, 2.0, 0.1, rng);
  const auto d1 = uniform_signal(2, 1.0, 2.0, 0.1, rng);
  const auto d2 = uniform_signal(2, 1.0, 2.0, 0.1, rng);
  const double a = 0.7;
  const double b = -1.9;
  const auto combo = d1.scaled(a).plus(d2, b);
  const auto z1 = noise_sensitivity(sys, v2(0.5, 0.0), u, w, d1, grid);
  const auto z2 = noise_sensitivity(sys, v2(0.5, 0.0), u, w, d2, grid);
  const auto z = noise_sensitivity(sys, v2(0.5, 0.0), u, w, combo, grid);
  for (std::size_t k = 0; k < z.sensitivity.size(); ++k) {
    CHECK((z.sensitivity[k] - (a * z1.sensitivity[k] + b * z2.sensitivity[k])).norm() <= 1e-13);
  }
}

TEST_CASE("flow semigroup is node exact") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto u = bearing::u_spi<double>(sc, 1.0, 0.3);
  const auto whole = flow(bearing_at_origin(), v2(1.0, 0.0), u, TimeGrid::covering(0.0, 3.0, 0.01));
  const Vec mid = whole.at_time(1.2);
  const auto rest = flow(bearing_at_origin(), mid, u, TimeGrid::covering(1.2, 3.0, 0.01));
  CHECK(rest.back() == whole.back());

  const auto p = pendulum();
  const auto up = Input::constant(Vec::Constant(1, 0.4));
  const auto pw = flow(p, v2(1.0, -0.5), up, TimeGrid::covering(0.0, 3.0, 0.01));
  const auto pr = flow(p, pw.at_time(2.0), up, TimeGrid::covering(2.0, 3.0, 0.01));
  CHECK(pr.back() == pw.back());
}

TEST_CASE("stm cocycle") {
  const auto p = pendulum();
  const auto up = Input::constant(Vec::Constant(1, 0.4));
  const auto full = stm(p, v2(1.0, -0.5), up, TimeGrid::covering(0.0, 3.0, 0.01));
  const auto tail = stm(p, full.at_time(1.0), up, TimeGrid::covering(1.0, 3.0, 0.01));
  const Mat phi21 = full.stm[static_cast<std::size_t>(full.grid.local_index(1.0))];
  CHECK((tail.stm.back() * phi21 - full.stm.back()).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("stm columns match finite differences of the flow") {
  Gen gen(3);
  const auto p = pendulum();
  const Input u(1, {{0.0, [](double s) { return Vec::Constant(1, std::sin(s)); }}});
  const auto grid = TimeGrid::covering(0.0, 2.0, 0.01);
  const double eps = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec xi = gen.vec(2, -1.5, 1.5);
    const auto traj = stm(p, xi, u, grid);
    for (int i = 0; i < 2; ++i) {
      const Vec e = Vec::Unit(2, i);
      const Vec fd = (flow(p, Vec(xi + eps * e), u, grid).back() - flow(p, Vec(xi - eps * e), u, grid).back()) /
                     (2.0 * eps);
      CHECK((fd - traj.stm.back().col(i)).norm() <= std::max(1e-6, 10 * eps * eps));
    }
  }
}

TEST_CASE("system Jacobians agree with finite differences") {
  Gen gen(17);
  const auto bear = bearing::bearing_system<double>(v2(0.3, -0.2));
  const auto p = pendulum();
  for (int trial = 0; trial < 25; ++trial) {
    const Vec x = gen.vec(2, -2.0, 2.0);
    if ((x - v2(0.3, -0.2)).norm() < 0.1) continue;
    const Vec u2 = gen.vec(2, -1.0, 1.0);
    const Vec u1 = gen.vec(1, -1.0, 1.0);
    const double eps = 1e-6;
    CHECK((fd_jacobian<double>(bear.h, x, u2, eps) - bear.dh_dx(x, u2)).norm() <= 1e-8);
    CHECK((fd_jacobian<double>(bear.f, x, u2, eps) - bear.df_dx(x, u2)).norm() <= 1e-8);
    CHECK((fd_jacobian<double>(p.h, x, u1, eps) - p.dh_dx(x, u1)).norm() <= 1e-8);
    CHECK((fd_jacobian<double>(p.f, x, u1, eps) - p.df_dx(x, u1)).norm() <= 1e-8);
    CHECK(bear.h(x, u2).size() == bear.n_y);
    CHECK(p.df_dx(x, u1).rows() == p.n_x);
  }
}

TEST_CASE("reaching the landmark is a domain violation") {
  const bearing::Scenario sc(v2(0.0, 0.0), v2(1.0, 0.0));
  const auto u = bearing::u_cst<double>(sc, 1.0);
  try {
    flow(bearing_at_origin(), v2(1.0, 0.0), u, TimeGrid::covering(0.0, 2.0, 0.01));
    FAIL("expected DomainViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DomainViolation);
  }
}

TEST_CASE("grid errors") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  CHECK(kind_of([] { TimeGrid::covering(0.0, 0.015, 0.01); }) == ErrorKind::GridMismatch);
  CHECK(kind_of([] { TimeGrid::covering(1.0, 0.5, 0.01); }) == ErrorKind::GridMismatch);
  CHECK(kind_of([] { TimeGrid::covering(0.0, 1.0, 0.0); }) == ErrorKind::GridMismatch);

  const Input jumpy(2, {{0.0, [](double) { return v2(1.0, 0.0); }}, {0.505, [](double) { return v2(0.0, 1.0); }}});
  const auto sys = bearing::bearing_system<double>(v2(9.0, 9.0));
  CHECK(kind_of([&] { flow(sys, v2(0.0, 0.0), jumpy, TimeGrid::covering(0.0, 1.0, 0.01)); }) ==
        ErrorKind::GridMismatch);

  const auto w = SampledSignal<double>(0.0, 0.015, Mat::Zero(2, 100));
  CHECK(kind_of([&] { perturbed_flow(sys, v2(0.0, 0.0), const_input(1.0, 0.0), w, TimeGrid::covering(0.0, 1.0, 0.01)); }) ==
        ErrorKind::GridMismatch);
}

TEST_CASE("aligned breakpoints switch pieces exactly") {
  const Input jumpy(2, {{0.0, [](double) { return v2(1.0, 0.0); }}, {0.5, [](double) { return v2(0.0, 1.0); }}});
  const auto sys = bearing::bearing_system<double>(v2(9.0, 9.0));
  const auto traj = flow(sys, v2(0.0, 0.0), jumpy, TimeGrid::covering(0.0, 1.0, 0.01));
  CHECK((traj.back() - v2(0.5, 0.5)).norm() <= 1e-14);
  CHECK(jumpy(0.5) == v2(0.0, 1.0));
}

TEST_CASE("sampled signals and noise norms") {
  const auto z = NoiseSignals<double>::zero(2, 2, 3.0, 0.1);
  CHECK(z.norm() == 0.0);
  CHECK(z.is_zero());

  Mat sv(2, 3);
  sv << 0.1, 0.0, -0.3, 0.0, 0.4, 0.0;
  Mat sw(2, 3);
  sw << 0.2, 0.0, 0.0, 0.0, 0.0, 0.1;
  NoiseSignals<double> eta{SampledSignal<double>(0.0, 1.0, sv), SampledSignal<double>(0.0, 1.0, sw)};
  CHECK(eta.norm() == doctest::Approx(0.4));
  CHECK(eta.v(1.0) == v2(0.0, 0.4));
  CHECK(eta.v(0.999) == v2(0.1, 0.0));
  CHECK(eta.v(3.0) == v2(-0.3, 0.0));
  // v sup restricted to the window, w sup over [0, t]
  CHECK(eta.norm(3.0, 0.5) == doctest::Approx(0.3));
  CHECK(eta.norm(1.0, 1.0) == doctest::Approx(0.4));
}

TEST_CASE("bounded inputs respect their declared bound") {
  Gen gen(8);
  const bearing::Scenario sc(v2(0.5, -1.0), v2(2.0, 1.0));
  const auto uc = bearing::u_circ<double>(sc, 1.7);
  const auto uk = bearing::u_cst<double>(sc, -0.4);
  for (int i = 0; i < 200; ++i) {
    const double s = gen.uniform(0.0, 50.0);
    CHECK(uc(s).norm() <= *uc.bound() + 1e-12);
    CHECK(uk(s).norm() <= *uk.bound() + 1e-12);
  }
  CHECK_FALSE(bearing::u_spi<double>(sc, 1.0, 0.3).bound().has_value());
}
