#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "emff/model.hpp"
#include "emff/params.hpp"

namespace emff {

// Per-pair moment amplitudes.  For pair k = {i,j} with i < j, lo[k] is the
// amplitude satellite i drives at the pair's carrier and hi[k] the amplitude
// satellite j drives.  Both sides share the carrier; the amplitudes differ.
struct AmplitudeSet {
  std::vector<Vec3> lo, hi;

  static AmplitudeSet zero(int pair_count) {
    AmplitudeSet a;
    a.lo.assign(pair_count, Vec3::Zero());
    a.hi.assign(pair_count, Vec3::Zero());
    return a;
  }

  // Amplitude satellite `sat` uses toward partner `other`.
  const Vec3& toward(int sat, int other, const PairIndex& pairs) const {
    const int k = pairs.at(sat, other);
    return sat == pairs.lo(k) ? lo[k] : hi[k];
  }
};

// Total magnetic moment of one satellite at time t:
//   u_sat(t) = sum over partners of amplitude * sin(omega_pair * t).
Vec3 moment_at(int sat, double t, const AmplitudeSet& amps, const PhysicalParams& params,
               const PairIndex& pairs);

// Instantaneous accelerations under the oscillating moments:
//   vdot_i = c0/m * sum_{j != i} |r_ij|^-4 f(r_ij, u_i(t), u_j(t)).
// Throws std::domain_error on coincident satellites.
std::vector<Vec3> full_accelerations(const FormationState& state, const AmplitudeSet& amps,
                                     double t, const PhysicalParams& params,
                                     const PairIndex& pairs);

// Time average over [0, period_s] of f(r, u_i(t), u_j(t)) with r held fixed,
// by composite trapezoid; each moment is a line set {(omega, amplitude)}.
// samples = 0 picks at least 64 samples per shortest line period.  This is
// the independent quadrature route against which the closed-form pair
// average (drift/dipole_force_f) is checked.
Vec3 time_averaged_force_lines(const Vec3& r,
                               std::span<const std::pair<double, Vec3>> lines_i,
                               std::span<const std::pair<double, Vec3>> lines_j,
                               double period_s, std::size_t samples = 0);

// Same quadrature for pair k of a formation-wide amplitude set: u_i and u_j
// carry every line of their respective satellites, so the cross-carrier
// products are integrated too (and average out).
Vec3 time_averaged_pair_force(const Vec3& r, int k, const AmplitudeSet& amps,
                              const PhysicalParams& params, const PairIndex& pairs,
                              std::size_t samples = 0);

}  // namespace emff
