#pragma once

#include "emff/params.hpp"
#include "emff/types.hpp"

namespace emff {

// Direction-dependent part of the far-field force between two magnetic
// dipoles p (at the satellite displaced by r) and q:
//   f(r,p,q) = (q.rhat) p + (p.rhat) q + [p.q - 5 (p.rhat)(q.rhat)] rhat
// The physical force is c0 / |r|^4 * f(r,p,q).  Antisymmetric under swapping
// endpoints: f(-r,q,p) = -f(r,p,q).  Throws std::domain_error when r = 0.
Vec3 dipole_force_f(const Vec3& r, const Vec3& p, const Vec3& q);

// Pair-incidence matrix (n x pairs): column k has +1 at the pair's lower
// satellite index and -1 at the higher one.  Maps stacked pair forces to
// per-satellite force sums; its transpose maps satellite vectors to pair
// differences.
MatX build_B0(const PairIndex& pairs);

// Normalized pair forces: zeta_k = nu_k / |r_k|^4.  Throws std::domain_error
// when any pair separation is below kMinSeparationM.
ForceVector zeta(const FormationState& state, const ForceVector& nu, const PairIndex& pairs);

// Averaged-model vector field: rdot_i = v_i,
// vdot_i = c0/(2 m) * sum over pairs containing i of (+/-) zeta_k.
StateDerivative drift(const FormationState& state, const ForceVector& nu,
                      const PhysicalParams& params, const PairIndex& pairs);

// r_lo - r_hi for pair k.
inline Vec3 pair_separation(const FormationState& state, const PairIndex& pairs, int k) {
  return state.r[pairs.lo(k)] - state.r[pairs.hi(k)];
}

inline Vec3 pair_velocity(const FormationState& state, const PairIndex& pairs, int k) {
  return state.v[pairs.lo(k)] - state.v[pairs.hi(k)];
}

}  // namespace emff
