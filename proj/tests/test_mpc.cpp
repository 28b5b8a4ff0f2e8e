#include <doctest.h>

#include <cmath>

#include "emff/model.hpp"
#include "emff/mpc.hpp"
#include "emff/sim.hpp"
#include "oracles.hpp"

using namespace emff;
using emff::testing::vrand;

namespace {

PhysicalParams two_sat_physical() {
  PhysicalParams ph;
  ph.omega_rad_per_s = {200.0 * kPi};
  ph.period_s = 0.01;
  return ph;
}

// Dense batch oracle for the two-satellite planner: assemble the full
// horizon-stacked least-squares problem in the decision vector
// [u_0; ...; u_{K-1}] and solve its normal equations directly.
struct BatchOracle {
  MatX F, G, C, Cv;
  Mat3 Wp, Wv;
  Vec3 d;
  double dt, w_zeta;
  int K;

  BatchOracle(const MpcConfig& cfg, const PhysicalParams& ph) {
    dt = cfg.step_s;
    K = static_cast<int>(std::llround(cfg.horizon_s / cfg.step_s));
    Wp = cfg.w_pos;
    Wv = cfg.w_vel;
    w_zeta = cfg.w_zeta;
    d = cfg.desired_m[0];

    F = MatX::Identity(12, 12);
    F.block(0, 6, 6, 6) = dt * MatX::Identity(6, 6);
    const double gain = ph.c0() / (2.0 * ph.mass_kg);
    MatX bv = MatX::Zero(6, 3);
    bv.block(0, 0, 3, 3) = gain * Mat3::Identity();
    bv.block(3, 0, 3, 3) = -gain * Mat3::Identity();
    G = MatX::Zero(12, 3);
    G.block(0, 0, 6, 3) = 0.5 * dt * dt * bv;
    G.block(6, 0, 6, 3) = dt * bv;

    C = MatX::Zero(3, 12);
    C.block(0, 0, 3, 3) = Mat3::Identity();
    C.block(0, 3, 3, 3) = -Mat3::Identity();
    Cv = MatX::Zero(3, 12);
    Cv.block(0, 6, 3, 3) = Mat3::Identity();
    Cv.block(0, 9, 3, 3) = -Mat3::Identity();
  }

  // x_k as an affine map of the stacked controls.
  void state_map(const VecX& x0, int k, MatX* coef, VecX* offset) const {
    *coef = MatX::Zero(12, 3 * K);
    VecX free_state = x0;
    for (int j = 0; j < k; ++j) free_state = (F * free_state).eval();
    *offset = free_state;
    for (int j = 0; j < k; ++j) {
      MatX power = MatX::Identity(12, 12);
      for (int step = 0; step < k - 1 - j; ++step) power = (F * power).eval();
      coef->block(0, 3 * j, 12, 3) = power * G;
    }
  }

  double cost(const VecX& x0, const VecX& u) const {
    double total = 0.0;
    VecX x = x0;
    for (int k = 1; k <= K; ++k) {
      x = (F * x + G * u.segment<3>(3 * (k - 1))).eval();
      const Vec3 pos_err = C * x - d;
      const Vec3 vel = Cv * x;
      total += dt * (pos_err.dot(Wp * pos_err) + vel.dot(Wv * vel) +
                     w_zeta * u.segment<3>(3 * (k - 1)).squaredNorm());
    }
    return total;
  }

  VecX solve(const VecX& x0) const {
    MatX H = MatX::Zero(3 * K, 3 * K);
    VecX b = VecX::Zero(3 * K);
    for (int k = 1; k <= K; ++k) {
      MatX coef;
      VecX offset;
      state_map(x0, k, &coef, &offset);
      const MatX cpos = C * coef;
      const VecX rpos = C * offset - d;
      H += dt * cpos.transpose() * Wp * cpos;
      b += dt * cpos.transpose() * Wp * rpos;
      const MatX cvel = Cv * coef;
      const VecX rvel = Cv * offset;
      H += dt * cvel.transpose() * Wv * cvel;
      b += dt * cvel.transpose() * Wv * rvel;
      H.block(3 * (k - 1), 3 * (k - 1), 3, 3) += dt * w_zeta * Mat3::Identity();
    }
    return H.ldlt().solve(-b);
  }
};

MpcConfig oracle_config() {
  MpcConfig cfg;
  cfg.horizon_s = 0.75;
  cfg.step_s = 0.25;
  cfg.w_pos << 2.0, 0.3, 0.0, 0.3, 1.5, 0.0, 0.0, 0.0, 1.0;
  cfg.w_vel << 3.0, 0.0, 0.2, 0.0, 2.0, 0.0, 0.2, 0.0, 2.5;
  cfg.w_zeta = 0.5;
  cfg.desired_m = {Vec3(1.2, -0.4, 0.8)};
  return cfg;
}

FormationState two_sat_state() {
  FormationState s = FormationState::zero(2);
  s.r[0] = Vec3(0.3, 0.2, -0.1);
  s.r[1] = Vec3(-0.9, 0.5, -0.6);
  s.v[0] = Vec3(0.05, -0.02, 0.01);
  s.v[1] = Vec3(0.0, 0.03, -0.04);
  return s;
}

// The built-in reference formation, placed exactly at its desired offsets.
FormationState reference_equilibrium(const Scenario& sc, const PairIndex& pairs) {
  FormationState s = FormationState::zero(sc.n);
  s.r[0] = Vec3(4.0, -2.0, 1.0);
  s.r[1] = s.r[0] - sc.mpc.desired_m[pairs.at(0, 1)];
  s.r[2] = s.r[1] - sc.mpc.desired_m[pairs.at(1, 2)];
  return s;
}

}  // namespace

TEST_CASE("first planned step matches the dense batch solution") {
  const PhysicalParams ph = two_sat_physical();
  const PairIndex pairs(2);
  const MpcConfig cfg = oracle_config();
  const MpcPolicy policy(cfg, ph, pairs);
  const BatchOracle oracle(cfg, ph);

  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    FormationState s = two_sat_state();
    if (trial > 0) {
      for (int i = 0; i < 2; ++i) {
        s.r[i] += vrand(rng, -2, 2);
        s.v[i] += vrand(rng, -0.5, 0.5);
      }
    }
    const VecX u_star = oracle.solve(s.flatten());
    const VecX zeta_d = policy.zeta_desired(s);
    REQUIRE(zeta_d.size() == 3);
    CHECK((zeta_d - u_star.head(3)).norm() <= 1e-8 * (1.0 + u_star.head(3).norm()));
  }
}

TEST_CASE("policy rollout cost matches the oracle optimum and beats other plans") {
  const PhysicalParams ph = two_sat_physical();
  const PairIndex pairs(2);
  const MpcConfig cfg = oracle_config();
  const MpcPolicy policy(cfg, ph, pairs);
  const BatchOracle oracle(cfg, ph);

  const FormationState s = two_sat_state();
  const VecX u_star = oracle.solve(s.flatten());
  const double j_star = oracle.cost(s.flatten(), u_star);
  CHECK(policy.predicted_cost(s) == doctest::Approx(j_star).epsilon(1e-8));

  // Any other control sequence can only cost more.
  std::mt19937_64 rng(107);
  CHECK(j_star <= oracle.cost(s.flatten(), VecX::Zero(3 * oracle.K)) + 1e-12);
  for (int trial = 0; trial < 10; ++trial) {
    VecX u = u_star;
    for (int i = 0; i < u.size(); ++i) u[i] += emff::testing::urand(rng, -1e4, 1e4);
    CHECK(j_star <= oracle.cost(s.flatten(), u) * (1.0 + 1e-12));
  }
}

TEST_CASE("planner is quiet at the desired formation and affine around it") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(sc.n);
  const MpcPolicy policy(sc.mpc, sc.physical, pairs);
  const FormationState eq = reference_equilibrium(sc, pairs);

  CHECK(policy.zeta_desired(eq).norm() <= 1e-6);

  std::mt19937_64 rng(109);
  for (int trial = 0; trial < 10; ++trial) {
    FormationState lo = eq, hi = eq;
    for (int i = 0; i < sc.n; ++i) {
      const Vec3 dr = vrand(rng, -0.5, 0.5), dv = vrand(rng, -0.1, 0.1);
      lo.r[i] += dr;
      lo.v[i] += dv;
      hi.r[i] += 2.0 * dr;
      hi.v[i] += 2.0 * dv;
    }
    const VecX once = policy.zeta_desired(lo);
    const VecX twice = policy.zeta_desired(hi);
    CHECK((twice - 2.0 * once).norm() <= 1e-8 * (1.0 + twice.norm()));
  }
}

TEST_CASE("demanded force converts back to the planned normalized force") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(sc.n);
  const MpcPolicy policy(sc.mpc, sc.physical, pairs);

  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 20; ++trial) {
    FormationState s = FormationState::zero(sc.n);
    s.r = sc.r0_m;
    s.v = sc.v0_mps;
    for (int i = 0; i < sc.n; ++i) {
      s.r[i] += vrand(rng, -0.3, 0.3);
      s.v[i] += vrand(rng, -0.2, 0.2);
    }
    const VecX zeta_d = policy.zeta_desired(s);
    const ForceVector nu_d = policy.nu_desired(s);
    const ForceVector back = zeta(s, nu_d, pairs);
    CHECK((back.flatten() - zeta_d).norm() <= 1e-12 * (1.0 + zeta_d.norm()));
  }

  FormationState collided = FormationState::zero(sc.n);
  collided.r = sc.r0_m;
  collided.r[1] = collided.r[0];
  CHECK_THROWS_AS(static_cast<void>(policy.nu_desired(collided)), std::domain_error);
}

TEST_CASE("flow derivative of the demand matches its defining difference quotient") {
  const Scenario sc = reference_scenario();
  const PairIndex pairs(sc.n);
  const MpcPolicy policy(sc.mpc, sc.physical, pairs);

  FormationState s = FormationState::zero(sc.n);
  s.r = sc.r0_m;
  s.v = {Vec3(0.05, -0.1, 0.02), Vec3(-0.03, 0.08, 0.0), Vec3(0.01, 0.0, -0.06)};
  ForceVector nu = ForceVector::zero(pairs.count());
  for (int k = 0; k < pairs.count(); ++k) nu.f[k] = Vec3(2e5, -1e5, 5e4);
  const StateDerivative sd = drift(s, nu, sc.physical, pairs);

  const double delta = 1e-4;
  const ForceVector flow = policy.nu_desired_flow_derivative(s, sd, delta);

  FormationState forward = s;
  for (int i = 0; i < sc.n; ++i) {
    forward.r[i] += delta * sd.rdot[i];
    forward.v[i] += delta * sd.vdot[i];
  }
  const VecX expect =
      (policy.nu_desired(forward).flatten() - policy.nu_desired(s).flatten()) / delta;
  CHECK((flow.flatten() - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
}

TEST_CASE("planner configuration is validated") {
  const PhysicalParams ph = two_sat_physical();
  const PairIndex pairs(2);
  MpcConfig cfg = oracle_config();

  SUBCASE("step must divide the horizon") {
    cfg.step_s = 0.2;  // 0.75 / 0.2 is not an integer
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
  SUBCASE("position weight must be symmetric positive definite") {
    cfg.w_pos << 1, 0, 0, 0, -2, 0, 0, 0, 1;
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
  SUBCASE("velocity weight must be symmetric") {
    cfg.w_vel(0, 1) = 0.7;  // asymmetric entry
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
  SUBCASE("control weight must be positive") {
    cfg.w_zeta = 0.0;
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
  SUBCASE("one desired offset per pair") {
    cfg.desired_m = {};
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
  SUBCASE("difference step must be positive") {
    cfg.flow_fd_delta_s = 0.0;
    CHECK_THROWS_AS(MpcPolicy(cfg, ph, pairs), std::invalid_argument);
  }
}
