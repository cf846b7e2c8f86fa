#include <doctest.h>

#include <cmath>

#include "obsmhe/bearing.hpp"
#include "obsmhe/mhe.hpp"
#include "obsmhe/noise.hpp"
#include "obsmhe/stability.hpp"
#include "support.hpp"

using namespace obsmhe;
using namespace testing;

namespace {

const Vec kX0 = v2(1.0, 0.0);
const bearing::Scenario kSc(v2(0.0, 0.0), v2(1.0, 0.0));
const Input kCirc = bearing::u_circ<double>(kSc, 1.0);
constexpr double kStep = 0.01;

std::vector<double> range(double a, double b, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
  return out;
}

UniformOptions v_channel() {
  UniformOptions o;
  o.channels.w = false;
  return o;
}

}  // namespace

TEST_CASE("nonuniform audit on the circle") {
  std::vector<NonuniformAudit> audits;
  for (double t : {2.0, 4.0, 6.0}) audits.push_back(audit_nonuniform_stability(bearing_at_origin(), kX0, kCirc, t, 2.0, 1e-3, kStep));
  for (const auto& a : audits) {
    CHECK(rel_err(a.mu_t, bearing::circ_eigs(2.0, 1.0, 1.0).minus) <= 1e-6);
    CHECK(rel_err(a.K, (a.C1 + a.C2) / (2.0 * a.mu_t)) <= 1e-15);
    CHECK(a.C1 > 0.0);
    CHECK(std::isfinite(a.K));
  }
  // sup ||H Phi|| = 1 on the unit circle, so C1 = 2T
  CHECK(audits.front().C1 == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("nonuniform audit rejects a singular window") {
  try {
    audit_nonuniform_stability(bearing_at_origin(), kX0, bearing::u_cst<double>(kSc, -1.0), 2.0, 1.0, 1e-3, kStep);
    FAIL("expected SingularWindow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularWindow);
  }
}

TEST_CASE("measured PMHE error stays below K_t times the noise norm") {
  const double t = 4.0;
  const double T = 2.0;
  const double nu = 1e-3;
  const auto audit = audit_nonuniform_stability(bearing_at_origin(), kX0, kCirc, t, T, nu, kStep);
  const Vec init = reference_state(bearing_at_origin(), kX0, kCirc, t - T, kStep);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rv(seed, 1);
    Rng rw(seed, 2);
    const NoiseSignals<double> eta{uniform_signal(2, nu, t, 0.1, rv), uniform_signal(2, nu, t, 0.1, rw)};
    const auto sol = solve_pmhe(bearing_at_origin(), kX0, kCirc, t, T, eta, init, {}, kStep);
    REQUIRE(sol.converged);
    CHECK(*sol.error_to_reference <= audit.K * eta.norm(t, T));
  }
}

TEST_CASE("spiral K_t grows with t") {
  const auto u = bearing::u_spi<double>(kSc, 1.0, 0.3);
  double prev = 0.0;
  for (double t : range(2.0, 12.0, 6)) {
    const auto a = audit_nonuniform_stability(bearing_at_origin(), kX0, u, t, 2.0, 1e-3, kStep);
    CHECK(rel_err(a.mu_t, bearing::spi_eigs_exact(t, 2.0, 1.0, 0.3, 1.0).minus) <= 1e-5);
    CHECK(a.K > prev);
    prev = a.K;
  }
}

TEST_CASE("uniform audit on the circle") {
  const auto t_grid = range(2.0, 11.0, 10);
  const auto audit = audit_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, t_grid, 0.05, 1e-3, 0.5, kStep,
                                             v_channel());
  CHECK(audit.conditions_ok);
  CHECK(rel_err(audit.mu_hat, 2.0 * bearing::circ_eigs(2.0, 1.0, 1.0).minus) <= 1e-6);
  CHECK(audit.g1 == audit.a1_hat * (audit.nu + audit.R));
  CHECK(audit.g2 == audit.a2_hat * audit.nu);
  CHECK(audit.g3_hat >= audit.a2_hat);
  CHECK(audit.condition1_ok == (audit.g1 / audit.mu_hat <= audit.alpha));
  CHECK(audit.condition2_ok == (audit.g2 / audit.mu_hat <= audit.R * (1.0 - audit.alpha)));
  REQUIRE(audit.bound_coefficient.has_value());
  CHECK(*audit.bound_coefficient == audit.g3_hat / (audit.mu_hat - audit.g1));
  CHECK(*audit.predicted_bound == *audit.bound_coefficient * audit.nu);
  CHECK(audit.min_eig.size() == t_grid.size());
  CHECK(audit.label == "sampled estimates");
}

TEST_CASE("uniform audit is deterministic across runs and threads") {
  const auto t_grid = range(2.0, 11.0, 10);
  auto opts = v_channel();
  opts.seed = 5;
  const auto a = evaluate_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, t_grid, 0.05, 1e-3, 0.5, kStep, opts);
  opts.threads = 4;
  const auto b = evaluate_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, t_grid, 0.05, 1e-3, 0.5, kStep, opts);
  CHECK(a.a1_hat == b.a1_hat);
  CHECK(a.a2_hat == b.a2_hat);
  CHECK(a.g3_hat == b.g3_hat);
  CHECK(a.min_eig == b.min_eig);
}

TEST_CASE("alpha close to one breaks the second condition") {
  try {
    audit_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, range(2.0, 11.0, 10), 0.05, 1e-3, 0.999, kStep,
                            v_channel());
    FAIL("expected ConditionsFailed");
  } catch (const ConditionsFailure& e) {
    CHECK(e.kind() == ErrorKind::ConditionsFailed);
    CHECK(e.audit().condition1_ok);
    CHECK_FALSE(e.audit().condition2_ok);
    CHECK_FALSE(e.audit().conditions_ok);
  }
}

TEST_CASE("a one second window is too short for the circle") {
  const auto audit = evaluate_uniform_stability(bearing_at_origin(), kX0, kCirc, 1.0, range(1.0, 10.0, 10), 0.05, 1e-3,
                                                0.5, kStep, v_channel());
  CHECK_FALSE(audit.condition1_ok);
  CHECK(audit.g1 / audit.mu_hat > 1.0);
  CHECK_FALSE(audit.bound_coefficient.has_value());
  CHECK_FALSE(audit.predicted_bound.has_value());
}

TEST_CASE("process noise channel makes the sensitivity grow") {
  auto opts = v_channel();
  const auto v = evaluate_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, {2.0, 6.0}, 0.05, 1e-3, 0.5, kStep, opts);
  opts.channels.w = true;
  const auto vw = evaluate_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, {2.0, 6.0}, 0.05, 1e-3, 0.5, kStep, opts);
  CHECK(vw.a2_hat > v.a2_hat);
  CHECK(vw.mu_hat == v.mu_hat);
}

TEST_CASE("rolling errors stay below the predicted bound") {
  const auto t_grid = range(2.0, 11.0, 10);
  const double nu = 1e-3;
  const auto audit = audit_uniform_stability(bearing_at_origin(), kX0, kCirc, 2.0, t_grid, 0.05, nu, 0.5, kStep,
                                             v_channel());
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rv(seed, 1);
    const NoiseSignals<double> eta{uniform_signal(2, nu, 11.0, 0.1, rv), SampledSignal<double>::zero(2, 0.0, 11.0, 0.1)};
    const auto sols = rolling_estimate(bearing_at_origin(), kX0, kCirc, t_grid, 2.0, eta,
                                       Vec(kX0 + v2(0.03, -0.04)), {}, kStep);
    for (const auto& s : sols) {
      REQUIRE(s.status == "ok");
      CHECK(*s.error_to_reference <= *audit.predicted_bound);
    }
  }
}

TEST_CASE("audits on a singular scenario raise SingularWindow") {
  try {
    evaluate_uniform_stability(bearing_at_origin(), kX0, bearing::u_cst<double>(kSc, -1.0), 1.0, {1.0, 2.0}, 0.05, 1e-3,
                               0.5, kStep, v_channel());
    FAIL("expected SingularWindow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularWindow);
  }
}
