#pragma once

#include "emff/amff.hpp"
#include "emff/model.hpp"

namespace emff {

// Moment amplitudes for one pair: c1 for the lower-index satellite, c2 for
// the higher-index one.  f(r, c1, c2) reproduces the requested pair force
// direction function exactly.
struct AmplitudePair {
  Vec3 c1, c2;
};

// Closed-form inversion of f(r, ., .) = f_star for a single pair.  Exact for
// every nonzero r; f_star = 0 short-circuits to zero amplitudes.  Throws
// std::domain_error on r = 0 and std::invalid_argument on non-finite input.
AmplitudePair amplitude_pair(const Vec3& r, const Vec3& f_star);

// Pairwise allocation across the formation: nu holds the per-pair force
// demands f*_ij.  Throws std::domain_error when a pair separation is below
// kMinSeparationM.
AmplitudeSet allocate_all(const FormationState& state, const ForceVector& nu,
                          const PairIndex& pairs);

// Smooth upper bound on max(|c1|^2, |c2|^2) over the allocation at (r, f):
//   psi = -(1/4)(r.f/|r|) tanh(r.f / (eps1 |r|)) + sqrt(2|r|^2|f|^2 - (r.f)^2
//         + eps2 |r|^2) / |r|
// Strictly exceeds |c1|^2 for every f (including f = 0), which makes the
// apparent-power constraint differentiable where the allocation itself jumps.
double power_bound_psi(const Vec3& r, const Vec3& f, double eps1, double eps2);

// Gradient of power_bound_psi with respect to r and f.
void power_bound_psi_gradient(const Vec3& r, const Vec3& f, double eps1, double eps2, Vec3* d_dr,
                              Vec3* d_df);

// |r x f| computed with fused-multiply-add correction so the parallel and
// antiparallel cones do not suffer catastrophic cancellation.
Vec3 stable_cross(const Vec3& a, const Vec3& b);

}  // namespace emff
