#include "emff/model.hpp"

#include <cmath>
#include <set>
#include <string>

namespace emff {

Vec3 dipole_force_f(const Vec3& r, const Vec3& p, const Vec3& q) {
  const double dist = r.norm();
  if (dist == 0.0) throw std::domain_error("dipole_force_f: zero separation");
  const Vec3 rhat = r / dist;
  const double p_r = p.dot(rhat);
  const double q_r = q.dot(rhat);
  return q_r * p + p_r * q + (p.dot(q) - 5.0 * p_r * q_r) * rhat;
}

MatX build_B0(const PairIndex& pairs) {
  MatX b0 = MatX::Zero(pairs.n(), pairs.count());
  for (int k = 0; k < pairs.count(); ++k) {
    b0(pairs.lo(k), k) = 1.0;
    b0(pairs.hi(k), k) = -1.0;
  }
  return b0;
}

ForceVector zeta(const FormationState& state, const ForceVector& nu, const PairIndex& pairs) {
  if (state.n() != pairs.n() || nu.pairs() != pairs.count())
    throw std::invalid_argument("zeta: state/nu size mismatch");
  ForceVector z = ForceVector::zero(pairs.count());
  for (int k = 0; k < pairs.count(); ++k) {
    const double dist = pair_separation(state, pairs, k).norm();
    if (dist < kMinSeparationM)
      throw std::domain_error("zeta: satellites " + std::to_string(pairs.lo(k) + 1) + " and " +
                              std::to_string(pairs.hi(k) + 1) + " are coincident");
    const double d2 = dist * dist;
    z.f[k] = nu.f[k] / (d2 * d2);
  }
  return z;
}

StateDerivative drift(const FormationState& state, const ForceVector& nu,
                      const PhysicalParams& params, const PairIndex& pairs) {
  const ForceVector z = zeta(state, nu, pairs);
  const double gain = params.c0() / (2.0 * params.mass_kg);
  StateDerivative d;
  d.rdot = state.v;
  d.vdot.assign(state.n(), Vec3::Zero());
  for (int k = 0; k < pairs.count(); ++k) {
    const Vec3 accel = gain * z.f[k];
    d.vdot[pairs.lo(k)] += accel;
    d.vdot[pairs.hi(k)] -= accel;
  }
  return d;
}

void PhysicalParams::validate(const PairIndex& pairs) const {
  if (mass_kg <= 0.0) throw std::invalid_argument("physical.mass_kg must be positive");
  if (mu0_Tm_per_A <= 0.0) throw std::invalid_argument("physical.mu0_Tm_per_A must be positive");
  if (coil_turns <= 0.0 || coil_area_m2 <= 0.0)
    throw std::invalid_argument("physical coil turns/area must be positive");
  if (coil_resistance_ohm < 0.0 || coil_inductance_H < 0.0)
    throw std::invalid_argument("physical coil resistance/inductance must be nonnegative");
  if (static_cast<int>(omega_rad_per_s.size()) != pairs.count())
    throw std::invalid_argument("physical.omega_rad_per_s: need one carrier per pair");
  if (!(period_s > 0.0)) throw std::invalid_argument("physical.period_s must be positive");
  std::set<double> seen;
  for (int k = 0; k < pairs.count(); ++k) {
    const double w = omega_rad_per_s[k];
    if (!(w > 0.0)) throw std::invalid_argument("physical.omega_rad_per_s must be positive");
    if (!seen.insert(w).second)
      throw std::invalid_argument("physical.omega_rad_per_s: carriers must be distinct");
    // Every carrier must complete an integer number of cycles in period_s.
    const double cycles = period_s * w / (2.0 * kPi);
    if (std::abs(cycles - std::round(cycles)) > 1e-9 * std::max(1.0, cycles))
      throw std::invalid_argument("physical.period_s is not a common period of the carriers");
  }
}

}  // namespace emff
