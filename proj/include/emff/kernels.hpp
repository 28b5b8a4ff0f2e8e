#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace emff::kernels {

// One oscillator bank: u(t) = sum_l amp_l * sin(omega_l * t).  Amplitudes are
// component-split (structure-of-arrays) so the kernels can stream them.
struct MomentLines {
  std::span<const double> omega;
  std::span<const double> ax, ay, az;
};

// Structure-of-arrays views of 3-vector batches.
struct Batch3 {
  std::span<const double> x, y, z;
};
struct Batch3Out {
  std::span<double> x, y, z;
};

// The two data-parallel inner loops of the project.  Callers guarantee
// nonzero separations; the kernels do no domain checking of their own.
struct KernelTable {
  const char* name;
  // out_m = f(r_m, p_m, q_m) elementwise over a batch of dipole triples.
  void (*dipole_force_batch)(const Batch3& r, const Batch3& p, const Batch3& q,
                             const Batch3Out& out);
  // Plain sum over s = 0..nsamples-1 of f(r, u_i(t0+s*dt), u_j(t0+s*dt)),
  // with u_i and u_j synthesized from their oscillator banks.
  std::array<double, 3> (*pair_force_sum)(const std::array<double, 3>& r, const MomentLines& ui,
                                          const MomentLines& uj, double t0, double dt,
                                          std::size_t nsamples);
};

// Always-available reference implementation: plain loops and std::sin.
const KernelTable& scalar_kernels();

// Wide variant built on std::experimental::simd (AVX2+FMA on x86_64, NEON on
// aarch64); nullptr when the build or the running CPU lacks support.
const KernelTable* simd_kernels();

// simd_kernels() when usable, otherwise the scalar reference.  The
// EMFF_KERNEL environment variable ("scalar" / "simd") pins a path, which the
// equivalence tests use.  The choice is made once per process.
const KernelTable& active_kernels();

}  // namespace emff::kernels
