#include <doctest.h>

#include <cmath>

#include "emff/safety.hpp"
#include "emff/sim.hpp"
#include "oracles.hpp"

using namespace emff;
using emff::testing::urand;
using emff::testing::vrand;

namespace {

PhysicalParams one_pair_physical() {
  PhysicalParams ph;
  ph.omega_rad_per_s = {200.0 * kPi};
  ph.period_s = 0.01;
  return ph;
}

CascadeState random_cascade(std::mt19937_64& rng, const PairIndex& pairs) {
  CascadeState c;
  const int n = pairs.n();
  c.x = FormationState::zero(n);
  for (bool ok = false; !ok;) {
    for (int i = 0; i < n; ++i) c.x.r[i] = vrand(rng, -4.0, 4.0);
    ok = true;
    for (int k = 0; k < pairs.count() && ok; ++k)
      ok = pair_separation(c.x, pairs, k).norm() >= 0.7;
  }
  for (int i = 0; i < n; ++i) c.x.v[i] = vrand(rng, -1.2, 1.2);
  c.nu = ForceVector::zero(pairs.count());
  for (int k = 0; k < pairs.count(); ++k) c.nu.f[k] = vrand(rng, -1e6, 1e6);
  return c;
}

double soft_h(const CascadeState& c, const PhysicalParams& ph, const ConstraintParams& cons,
              const CbfConfig& cbf, const PairIndex& pairs) {
  return soft_min(barrier_values(c, ph, cons, cbf, pairs).args(), cbf.rho);
}

}  // namespace

TEST_CASE("soft minimum closed forms, bounds, and weights") {
  SUBCASE("equal arguments") {
    const double h = soft_min({2.5, 2.5, 2.5}, 10.0);
    CHECK(h == doctest::Approx(2.5 - std::log(3.0) / 10.0).epsilon(1e-14));
  }
  SUBCASE("two arguments at a known gap") {
    const double gap = 0.7, rho = 10.0;
    const double h = soft_min({0.0, gap}, rho);
    CHECK(h == doctest::Approx(-std::log1p(std::exp(-rho * gap)) / rho).epsilon(1e-14));
  }
  SUBCASE("lower bound on the minimum, tight as the count shrinks") {
    std::mt19937_64 rng(127);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> z(5);
      for (double& v : z) v = urand(rng, -50, 50);
      const double rho = urand(rng, 0.5, 20.0);
      std::vector<double> w;
      const double h = soft_min(z, rho, &w);
      const double zmin = *std::min_element(z.begin(), z.end());
      CHECK(h <= zmin);
      CHECK(h >= zmin - std::log(static_cast<double>(z.size())) / rho);
      double sum = 0.0;
      for (const double wi : w) {
        CHECK(wi >= 0.0);
        sum += wi;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      // The smallest argument carries the largest weight.
      const auto arg = std::min_element(z.begin(), z.end()) - z.begin();
      CHECK(w[arg] == *std::max_element(w.begin(), w.end()));
    }
  }
  SUBCASE("extreme spreads neither overflow nor underflow") {
    std::vector<double> w;
    const double h = soft_min({1e8, -1e8}, 10.0, &w);
    CHECK(h == doctest::Approx(-1e8).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(1.0));
    CHECK(std::isfinite(w[0]));
  }
  SUBCASE("error contract") {
    CHECK_THROWS_AS(soft_min({}, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(soft_min({1.0}, 0.0), std::invalid_argument);
  }
}

TEST_CASE("barrier stack evaluates the constraint cascade by hand") {
  const PairIndex pairs(2);
  const PhysicalParams ph = one_pair_physical();
  const ConstraintParams cons;  // r_min 1, v_max 1, q_max 9e6, eps 1e-3
  const CbfConfig cbf;          // k0 = k1 = kv = 5

  CascadeState c;
  c.x = FormationState::zero(2);
  c.x.r[0] = Vec3(2.0, 0.0, 0.0);
  c.x.v[0] = Vec3(0.1, 0.0, 0.0);
  c.nu = ForceVector::zero(1);

  SUBCASE("zero demanded force") {
    const BarrierValues b = barrier_values(c, ph, cons, cbf, pairs);
    CHECK(b.R[0] == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(b.R1[0] == doctest::Approx(7.7).epsilon(1e-14));
    // d/dt R1 = |v|^2 + r.vdot + k0 r.v = 0.01 + 0 + 1.0; R2 = that + k1 R1.
    CHECK(b.R2[0] == doctest::Approx(39.51).epsilon(1e-14));
    CHECK(b.V[0] == doctest::Approx(0.495).epsilon(1e-14));
    CHECK(b.V1[0] == doctest::Approx(2.475).epsilon(1e-14));
    // psi(r, 0) = sqrt(eps2 d^2)/d = sqrt(eps2); both satellites carry it.
    const double z = std::hypot(0.3673, 200.0 * kPi * 0.12);
    const double kappa = 1.0 / std::pow(400.0 * 0.1963, 2);
    const double expect_q = 9e6 - kappa * z * std::sqrt(1e-3);
    CHECK(b.Q[0] == doctest::Approx(expect_q).epsilon(1e-14));
    CHECK(b.Q[1] == doctest::Approx(expect_q).epsilon(1e-14));
  }

  SUBCASE("nonzero demanded force feeds the acceleration terms") {
    c.nu.f[0] = Vec3(1e5, 2e4, -3e4);
    const BarrierValues b = barrier_values(c, ph, cons, cbf, pairs);
    //

    // dvdot = 2 * c0/(2m) * nu / d^4 (both members push oppositely).
    const Vec3 dvdot = 2.0 * (3e-7 / 30.0) / 16.0 * c.nu.f[0];
    const Vec3 r = c.x.r[0], v = c.x.v[0];
    const double ddt_r1 = v.squaredNorm() + r.dot(dvdot) + 5.0 * r.dot(v);
    CHECK(b.R2[0] == doctest::Approx(ddt_r1 + 5.0 * b.R1[0]).epsilon(1e-13));
    CHECK(b.V1[0] == doctest::Approx(-v.dot(dvdot) + 5.0 * b.V[0]).epsilon(1e-13));
  }

  SUBCASE("coincident satellites are a domain error") {
    c.x.r[0] = Vec3::Zero();
    CHECK_THROWS_AS(static_cast<void>(barrier_values(c, ph, cons, cbf, pairs)),
                    std::domain_error);
  }
}

TEST_CASE("soft-min argument order and names") {
  const PairIndex pairs(3);
  CHECK(barrier_arg_name(pairs, 0) == "R12_2");
  CHECK(barrier_arg_name(pairs, 1) == "R13_2");
  CHECK(barrier_arg_name(pairs, 2) == "R23_2");
  CHECK(barrier_arg_name(pairs, 3) == "V12_1");
  CHECK(barrier_arg_name(pairs, 5) == "V23_1");
  CHECK(barrier_arg_name(pairs, 6) == "Q1");
  CHECK(barrier_arg_name(pairs, 8) == "Q3");

  const Scenario sc = reference_scenario();
  std::mt19937_64 rng(131);
  const CascadeState c = random_cascade(rng, pairs);
  const BarrierValues b = barrier_values(c, sc.physical, sc.constraints, sc.cbf, pairs);
  const std::vector<double> args = b.args();
  REQUIRE(args.size() == 9);
  for (int k = 0; k < 3; ++k) {
    CHECK(args[k] == b.R2[k]);
    CHECK(args[3 + k] == b.V1[k]);
    CHECK(args[6 + k] == b.Q[k]);
  }
}

TEST_CASE("composite gradient is consistent with its own pieces") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  std::mt19937_64 rng(137);
  for (int trial = 0; trial < 10; ++trial) {
    const CascadeState c = random_cascade(rng, pairs);
    const HGradient g = h_gradient(c, sc.physical, sc.constraints, sc.cbf, pairs);
    CHECK(g.h == soft_h(c, sc.physical, sc.constraints, sc.cbf, pairs));
    double sum = 0.0;
    for (const double w : g.weights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.argmin ==
          std::min_element(g.args.begin(), g.args.end()) - g.args.begin());
    CHECK(g.lie_control.size() == 9);
    CHECK((g.lie_control - sc.cbf.a_per_s * g.dh_dnu_flat()).norm() == 0.0);
  }
}

TEST_CASE("single-pair gradient in the demanded force has the hand-derived form") {
  const PairIndex pairs(2);
  const PhysicalParams ph = one_pair_physical();
  const ConstraintParams cons;
  const CbfConfig cbf;

  CascadeState c;
  c.x = FormationState::zero(2);
  c.x.r[0] = Vec3(1.7, 0.4, -0.2);
  c.x.r[1] = Vec3(-0.6, -0.3, 0.5);
  c.x.v[0] = Vec3(0.2, -0.1, 0.3);
  c.x.v[1] = Vec3(-0.1, 0.2, 0.1);
  c.nu = ForceVector::zero(1);
  c.nu.f[0] = Vec3(3e5, -2e5, 1e5);

  const HGradient g = h_gradient(c, ph, cons, cbf, pairs);
  const Vec3 r = pair_separation(c.x, pairs, 0);
  const Vec3 v = pair_velocity(c.x, pairs, 0);
  const double d4 = std::pow(r.norm(), 4);
  const double gain = ph.c0() / (2.0 * ph.mass_kg);

  Vec3 psi_f;
  power_bound_psi_gradient(r, c.nu.f[0], cons.eps1, cons.eps2, nullptr, &psi_f);
  const double kappa = ph.power_scale();
  const double z = ph.pair_impedance_ohm(0);

  // args: [R2, V1, Q1, Q2]; both power arguments share the same psi term.
  const Vec3 expect = g.weights[0] * (2.0 * gain / d4) * r -
                      g.weights[1] * (2.0 * gain / d4) * v -
                      (g.weights[2] + g.weights[3]) * kappa * z * psi_f;
  CHECK((g.dh_dnu[0] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
}

TEST_CASE("analytic Lie derivatives match finite differences") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  std::mt19937_64 rng(139);
  const auto fd4 = [](double m2, double m1, double p1, double p2, double step) {
    return (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step);
  };

  for (int trial = 0; trial < 20; ++trial) {
    const CascadeState c = random_cascade(rng, pairs);
    const HGradient g = h_gradient(c, sc.physical, sc.constraints, sc.cbf, pairs);
    const StateDerivative sd = drift(c.x, c.nu, sc.physical, pairs);

    const auto along_flow = [&](double s) {
      CascadeState p = c;
      for (int i = 0; i < 3; ++i) {
        p.x.r[i] += s * sd.rdot[i];
        p.x.v[i] += s * sd.vdot[i];
      }
      for (int k = 0; k < 3; ++k) p.nu.f[k] -= s * sc.cbf.a_per_s * c.nu.f[k];
      return soft_h(p, sc.physical, sc.constraints, sc.cbf, pairs);
    };
    const double step = 1e-5;
    const double fd_drift =
        fd4(along_flow(-2 * step), along_flow(-step), along_flow(step), along_flow(2 * step), step);
    CHECK(std::abs(g.lie_drift - fd_drift) <= 1e-5 * (1.0 + std::abs(fd_drift)));

    for (int k = 0; k < 3; ++k)
      for (int axis = 0; axis < 3; ++axis) {
        const double dnu = 1e-3 * (1.0 + std::abs(c.nu.f[k][axis]));
        const auto at = [&](double s) {
          CascadeState p = c;
          p.nu.f[k][axis] += s;
          return soft_h(p, sc.physical, sc.constraints, sc.cbf, pairs);
        };
        const double fd =
            sc.cbf.a_per_s * fd4(at(-2 * dnu), at(-dnu), at(dnu), at(2 * dnu), dnu);
        CHECK(std::abs(g.lie_control[3 * k + axis] - fd) <= 1e-5 * (1.0 + std::abs(fd)));
      }
  }
}

TEST_CASE("filter satisfies its optimality conditions") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  CbfConfig cbf = sc.cbf;
  cbf.gamma_slack = 1e4;  // make the slack term visible
  std::mt19937_64 rng(149);

  int active_seen = 0, inactive_seen = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const CascadeState c = random_cascade(rng, pairs);
    const HGradient g = h_gradient(c, sc.physical, sc.constraints, sc.cbf, pairs);
    ForceVector mu_d = ForceVector::zero(3);
    for (int k = 0; k < 3; ++k) mu_d.f[k] = vrand(rng, -1e6, 1e6);

    const FilterOutput out = filter_control(g, mu_d, cbf);
    const double scale = 1.0 + std::abs(g.lie_drift) + g.lie_control.norm() * 1e6;

    if (out.active) {
      ++active_seen;
      CHECK(out.omega < 0.0);
      CHECK(out.lambda > 0.0);
      // Stationarity: mu* - mu_d = lambda L_Gh, eta* = lambda h / gamma.
      CHECK((out.mu_star.flatten() - mu_d.flatten() - out.lambda * g.lie_control).norm() <=
            1e-10 * (1.0 + mu_d.flatten().norm()));
      CHECK(out.eta_star ==
            doctest::Approx(out.lambda * g.h / cbf.gamma_slack).epsilon(1e-12));
      // Complementary slackness: the constraint is tight at the optimum.
      CHECK(std::abs(filter_residual_b(g, out.mu_star, out.eta_star, cbf)) <= 1e-9 * scale);
    } else {
      ++inactive_seen;
      CHECK(out.lambda == 0.0);
      CHECK(out.eta_star == 0.0);
      for (int k = 0; k < 3; ++k)
        for (int axis = 0; axis < 3; ++axis)
          CHECK(out.mu_star.f[k][axis] == mu_d.f[k][axis]);
    }
    CHECK(filter_residual_b(g, out.mu_star, out.eta_star, cbf) >= -1e-9 * scale);
  }
  CHECK(active_seen > 0);
  CHECK(inactive_seen > 0);
}

TEST_CASE("no feasible competitor beats the filtered control") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  CbfConfig cbf = sc.cbf;
  cbf.gamma_slack = 1e4;
  std::mt19937_64 rng(151);

  int compared = 0;
  while (compared < 1000) {
    CascadeState c = random_cascade(rng, pairs);
    const HGradient g = h_gradient(c, sc.physical, sc.constraints, sc.cbf, pairs);
    if (g.h <= 0.0) continue;  // optimality statement lives on the safe set

    ForceVector mu_d = ForceVector::zero(3);
    for (int k = 0; k < 3; ++k) mu_d.f[k] = vrand(rng, -1e6, 1e6);
    const FilterOutput out = filter_control(g, mu_d, cbf);
    const double j_star =
        (out.mu_star.flatten() - mu_d.flatten()).squaredNorm() +
        cbf.gamma_slack * out.eta_star * out.eta_star;

    for (int probe = 0; probe < 20 && compared < 1000; ++probe, ++compared) {
      VecX mu_hat = mu_d.flatten();
      for (int i = 0; i < mu_hat.size(); ++i) mu_hat[i] += urand(rng, -2e5, 2e5);
      const ForceVector candidate = ForceVector::unflatten(mu_hat);
      const double need = filter_residual_b(g, candidate, 0.0, cbf);
      const double eta_hat =
          need >= 0.0 ? 0.0 : -need / g.h * (1.0 + 1e-12);
      if (filter_residual_b(g, candidate, eta_hat, cbf) < 0.0) continue;
      const double j_hat =
          (mu_hat - mu_d.flatten()).squaredNorm() + cbf.gamma_slack * eta_hat * eta_hat;
      CHECK(j_hat >= j_star - 1e-9 * (1.0 + j_star));
    }
  }
}

TEST_CASE("degenerate constraint gradient on the boundary is a domain error") {
  CbfConfig cbf;
  HGradient g;
  g.h = 0.0;
  g.lie_drift = -1.0;  // omega < 0 with no usable direction
  g.lie_control = VecX::Zero(3);
  const ForceVector mu_d = ForceVector::zero(1);
  CHECK_THROWS_AS(filter_control(g, mu_d, cbf), std::domain_error);
}

TEST_CASE("surrogate demand assembles tracking, feedforward, and flow terms") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  const MpcPolicy policy(sc.mpc, sc.physical, pairs);

  CascadeState c;
  c.x = FormationState::zero(3);
  c.x.r = sc.r0_m;
  c.x.v = {Vec3(0.02, -0.01, 0.0), Vec3(0.0, 0.03, -0.02), Vec3(-0.01, 0.0, 0.01)};
  c.nu = ForceVector::zero(3);
  for (int k = 0; k < 3; ++k) c.nu.f[k] = Vec3(1e5 * (k + 1), -2e4, 3e4);

  const ForceVector mu = mu_desired(c, policy, sc.physical, sc.cbf, pairs);

  const ForceVector nu_d = policy.nu_desired(c.x);
  const ForceVector flow =
      policy.nu_desired_flow_derivative(c.x, drift(c.x, c.nu, sc.physical, pairs));
  const double ratio = sc.cbf.sigma_per_s / sc.cbf.a_per_s;
  for (int k = 0; k < 3; ++k) {
    const Vec3 expect =
        c.nu.f[k] + ratio * (nu_d.f[k] - c.nu.f[k]) + flow.f[k] / sc.cbf.a_per_s;
    CHECK((mu.f[k] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
  }
}

TEST_CASE("demanded-force tracking error decays at the design rate") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(3);
  const MpcPolicy policy(sc.mpc, sc.physical, pairs);
  const SimContext ctx{sc.physical, sc.constraints, sc.cbf, pairs, &policy, false};

  CascadeState c;
  c.x = FormationState::zero(3);
  c.x.r = sc.r0_m;
  c.x.v = sc.v0_mps;
  c.nu = ForceVector::zero(3);

  const double e0 = (c.nu.flatten() - policy.nu_desired(c.x).flatten()).norm();
  REQUIRE(e0 > 0.0);
  const double horizon = 0.5, dt = 0.01;
  for (int step = 0; step < 50; ++step) {
    const HeldControl held = make_held_control(policy, c, sc.physical, pairs);
    c = step_averaged(c, dt, held, ctx);
  }
  const double e1 = (c.nu.flatten() - policy.nu_desired(c.x).flatten()).norm();
  const double rate = -std::log(e1 / e0) / horizon;
  CHECK(rate == doctest::Approx(sc.cbf.sigma_per_s).epsilon(0.05));
}
