#pragma once

#include <cmath>
#include <vector>

#include "emff/types.hpp"

namespace emff {

// Satellite and coil hardware plus the per-pair carrier frequencies.
// All satellites are identical (same mass and coil).
struct PhysicalParams {
  double mass_kg = 15.0;
  double mu0_Tm_per_A = 4.0e-7 * kPi;
  double coil_turns = 400.0;
  double coil_area_m2 = 0.1963;
  double coil_resistance_ohm = 0.3673;
  double coil_inductance_H = 0.12;

  // One carrier per unordered pair, PairIndex order; all distinct, and all
  // periods divide period_s so every product of two carriers averages out
  // over one common period.
  std::vector<double> omega_rad_per_s;
  double period_s = 0.0;

  // Leading constant of the far-field dipole force, 3*mu0/(4*pi).
  double c0() const { return 3.0 * mu0_Tm_per_A / (4.0 * kPi); }

  // |R + j*omega*L| of the series coil circuit at pair k's carrier.
  double pair_impedance_ohm(int k) const {
    return std::hypot(coil_resistance_ohm, omega_rad_per_s.at(k) * coil_inductance_H);
  }

  // 1/(N^2 A^2), the factor mapping moment-amplitude squared to apparent power.
  double power_scale() const {
    const double na = coil_turns * coil_area_m2;
    return 1.0 / (na * na);
  }

  // Throws std::invalid_argument when the frequency plan is unusable.
  void validate(const PairIndex& pairs) const;
};

// Safe-set limits shared by the barriers and the run-abort checks.
struct ConstraintParams {
  double r_min_m = 1.0;       // minimum pairwise separation
  double v_max_mps = 1.0;     // maximum pairwise relative speed
  double q_max_VA = 9.0e6;    // per-satellite apparent-power budget
  double eps1 = 1e-3;         // tanh sharpness in the power bound
  double eps2 = 1e-3;         // floor keeping the power bound strict at f = 0
};

// Gains of the barrier cascade and the minimally invasive filter.
struct CbfConfig {
  double a_per_s = 0.7;       // control-lag bandwidth, nu_dot = -a nu + a mu
  double sigma_per_s = 3.0;   // desired decay rate of nu toward nu_d
  double rho = 10.0;          // soft-min sharpness
  double k0_per_s = 5.0;      // distance barrier, first lift
  double k1_per_s = 5.0;      // distance barrier, second lift
  double kv_per_s = 5.0;      // relative-speed barrier lift
  double alpha_per_s = 0.02;  // class-K gain on the composite barrier
  double gamma_slack = 1e40;  // slack weight; effectively hard constraint
};

// Formation-planner settings.  w_zeta scales an identity input weight; the
// desired relative positions d (one per pair, r_lo - r_hi convention) must be
// chain-consistent: d_ik = d_ij + d_jk.
struct MpcConfig {
  double horizon_s = 10.0;
  double step_s = 0.1;
  Mat3 w_pos = Mat3::Identity();
  Mat3 w_vel = Mat3::Identity();
  double w_zeta = 1e-2;
  double flow_fd_delta_s = 1e-4;
  std::vector<Vec3> desired_m;
};

}  // namespace emff
