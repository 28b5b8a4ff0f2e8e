// Wide variants of the force kernels on std::experimental::simd.  This file
// is the only translation unit compiled with an extended ISA on x86_64; it is
// reached exclusively through the dispatch table in kernels.cpp, after the
// runtime CPU check.

#include <cmath>
#include <cstddef>
#include <experimental/simd>
#include <vector>

#include "emff/kernels.hpp"

namespace stdx = std::experimental;

namespace emff::kernels {
namespace {

using simd_d = stdx::native_simd<double>;
constexpr std::size_t kWidth = simd_d::size();

// Rotation recurrences accumulate one ulp-scale error per advance; reseeding
// from libm every kReseedBlocks keeps the drift below ~1e-13 relative.
constexpr std::size_t kReseedBlocks = 256;

void dipole_force_batch_simd(const Batch3& r, const Batch3& p, const Batch3& q,
                             const Batch3Out& out) {
  const std::size_t n = r.x.size();
  std::size_t m = 0;
  for (; m + kWidth <= n; m += kWidth) {
    simd_d rx, ry, rz, px, py, pz, qx, qy, qz;
    rx.copy_from(r.x.data() + m, stdx::element_aligned);
    ry.copy_from(r.y.data() + m, stdx::element_aligned);
    rz.copy_from(r.z.data() + m, stdx::element_aligned);
    px.copy_from(p.x.data() + m, stdx::element_aligned);
    py.copy_from(p.y.data() + m, stdx::element_aligned);
    pz.copy_from(p.z.data() + m, stdx::element_aligned);
    qx.copy_from(q.x.data() + m, stdx::element_aligned);
    qy.copy_from(q.y.data() + m, stdx::element_aligned);
    qz.copy_from(q.z.data() + m, stdx::element_aligned);
    const simd_d inv = 1.0 / stdx::sqrt(rx * rx + ry * ry + rz * rz);
    const simd_d hx = rx * inv, hy = ry * inv, hz = rz * inv;
    const simd_d pr = px * hx + py * hy + pz * hz;
    const simd_d qr = qx * hx + qy * hy + qz * hz;
    const simd_d pq = px * qx + py * qy + pz * qz;
    const simd_d c = pq - 5.0 * pr * qr;
    (qr * px + pr * qx + c * hx).copy_to(out.x.data() + m, stdx::element_aligned);
    (qr * py + pr * qy + c * hy).copy_to(out.y.data() + m, stdx::element_aligned);
    (qr * pz + pr * qz + c * hz).copy_to(out.z.data() + m, stdx::element_aligned);
  }
  for (; m < n; ++m) {
    const double dist = std::sqrt(r.x[m] * r.x[m] + r.y[m] * r.y[m] + r.z[m] * r.z[m]);
    const double inv = 1.0 / dist;
    const double hx = r.x[m] * inv, hy = r.y[m] * inv, hz = r.z[m] * inv;
    const double pr = p.x[m] * hx + p.y[m] * hy + p.z[m] * hz;
    const double qr = q.x[m] * hx + q.y[m] * hy + q.z[m] * hz;
    const double pq = p.x[m] * q.x[m] + p.y[m] * q.y[m] + p.z[m] * q.z[m];
    const double c = pq - 5.0 * pr * qr;
    out.x[m] = qr * p.x[m] + pr * q.x[m] + c * hx;
    out.y[m] = qr * p.y[m] + pr * q.y[m] + c * hy;
    out.z[m] = qr * p.z[m] + pr * q.z[m] + c * hz;
  }
}

// Bank of sinusoid lines evaluated lane-parallel over consecutive samples.
// Each line keeps sin/cos per lane and advances all lanes by kWidth samples
// per block with one complex rotation.
struct OscillatorBank {
  const MomentLines& lines;
  std::vector<simd_d> s, c;          // current sin/cos per line
  std::vector<double> step_s, step_c;  // rotation by kWidth*dt per line

  explicit OscillatorBank(const MomentLines& ml, double dt) : lines(ml) {
    const std::size_t n = ml.omega.size();
    s.resize(n);
    c.resize(n);
    step_s.resize(n);
    step_c.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
      const double a = ml.omega[l] * dt * static_cast<double>(kWidth);
      step_s[l] = std::sin(a);
      step_c[l] = std::cos(a);
    }
  }

  void seed(double t0, double dt, std::size_t sample) {
    for (std::size_t l = 0; l < lines.omega.size(); ++l) {
      simd_d sv, cv;
      for (std::size_t w = 0; w < kWidth; ++w) {
        const double t = t0 + static_cast<double>(sample + w) * dt;
        sv[w] = std::sin(lines.omega[l] * t);
        cv[w] = std::cos(lines.omega[l] * t);
      }
      s[l] = sv;
      c[l] = cv;
    }
  }

  void advance() {
    for (std::size_t l = 0; l < lines.omega.size(); ++l) {
      const simd_d ns = s[l] * step_c[l] + c[l] * step_s[l];
      const simd_d nc = c[l] * step_c[l] - s[l] * step_s[l];
      s[l] = ns;
      c[l] = nc;
    }
  }

  void synthesize(simd_d& ux, simd_d& uy, simd_d& uz) const {
    ux = uy = uz = simd_d(0.0);
    for (std::size_t l = 0; l < lines.omega.size(); ++l) {
      ux += lines.ax[l] * s[l];
      uy += lines.ay[l] * s[l];
      uz += lines.az[l] * s[l];
    }
  }
};

std::array<double, 3> pair_force_sum_simd(const std::array<double, 3>& r, const MomentLines& ui,
                                          const MomentLines& uj, double t0, double dt,
                                          std::size_t nsamples) {
  const double dist = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  const double inv = 1.0 / dist;
  const simd_d hx(r[0] * inv), hy(r[1] * inv), hz(r[2] * inv);

  OscillatorBank bank_i(ui, dt), bank_j(uj, dt);
  simd_d accx(0.0), accy(0.0), accz(0.0);
  const std::size_t blocks = nsamples / kWidth;
  for (std::size_t b = 0; b < blocks; ++b) {
    if (b % kReseedBlocks == 0) {
      bank_i.seed(t0, dt, b * kWidth);
      bank_j.seed(t0, dt, b * kWidth);
    } else {
      bank_i.advance();
      bank_j.advance();
    }
    simd_d px, py, pz, qx, qy, qz;
    bank_i.synthesize(px, py, pz);
    bank_j.synthesize(qx, qy, qz);
    const simd_d pr = px * hx + py * hy + pz * hz;
    const simd_d qr = qx * hx + qy * hy + qz * hz;
    const simd_d pq = px * qx + py * qy + pz * qz;
    const simd_d c = pq - 5.0 * pr * qr;
    accx += qr * px + pr * qx + c * hx;
    accy += qr * py + pr * qy + c * hy;
    accz += qr * pz + pr * qz + c * hz;
  }

  std::array<double, 3> sum{stdx::reduce(accx), stdx::reduce(accy), stdx::reduce(accz)};

  // Remaining samples, evaluated exactly as the scalar reference would.
  const double shx = r[0] * inv, shy = r[1] * inv, shz = r[2] * inv;
  for (std::size_t s = blocks * kWidth; s < nsamples; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    double px = 0.0, py = 0.0, pz = 0.0;
    for (std::size_t l = 0; l < ui.omega.size(); ++l) {
      const double sv = std::sin(ui.omega[l] * t);
      px += ui.ax[l] * sv;
      py += ui.ay[l] * sv;
      pz += ui.az[l] * sv;
    }
    double qx = 0.0, qy = 0.0, qz = 0.0;
    for (std::size_t l = 0; l < uj.omega.size(); ++l) {
      const double sv = std::sin(uj.omega[l] * t);
      qx += uj.ax[l] * sv;
      qy += uj.ay[l] * sv;
      qz += uj.az[l] * sv;
    }
    const double pr = px * shx + py * shy + pz * shz;
    const double qr = qx * shx + qy * shy + qz * shz;
    const double pq = px * qx + py * qy + pz * qz;
    const double c = pq - 5.0 * pr * qr;
    sum[0] += qr * px + pr * qx + c * shx;
    sum[1] += qr * py + pr * qy + c * shy;
    sum[2] += qr * pz + pr * qz + c * shz;
  }
  return sum;
}

}  // namespace

namespace detail {
const KernelTable* simd_table() {
  static const KernelTable table{"simd", &dipole_force_batch_simd, &pair_force_sum_simd};
  return &table;
}
}  // namespace detail

}  // namespace emff::kernels
