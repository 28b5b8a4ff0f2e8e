#include <cmath>
#include <cstddef>

#include "emff/kernels.hpp"

namespace emff::kernels {
namespace {

void dipole_force_batch_scalar(const Batch3& r, const Batch3& p, const Batch3& q,
                               const Batch3Out& out) {
  const std::size_t n = r.x.size();
  for (std::size_t m = 0; m < n; ++m) {
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

std::array<double, 3> pair_force_sum_scalar(const std::array<double, 3>& r, const MomentLines& ui,
                                            const MomentLines& uj, double t0, double dt,
                                            std::size_t nsamples) {
  const double dist = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  const double inv = 1.0 / dist;
  const double hx = r[0] * inv, hy = r[1] * inv, hz = r[2] * inv;
  double sx = 0.0, sy = 0.0, sz = 0.0;
  for (std::size_t s = 0; s < nsamples; ++s) {
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
    const double pr = px * hx + py * hy + pz * hz;
    const double qr = qx * hx + qy * hy + qz * hz;
    const double pq = px * qx + py * qy + pz * qz;
    const double c = pq - 5.0 * pr * qr;
    sx += qr * px + pr * qx + c * hx;
    sy += qr * py + pr * qy + c * hy;
    sz += qr * pz + pr * qz + c * hz;
  }
  return {sx, sy, sz};
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", &dipole_force_batch_scalar, &pair_force_sum_scalar};
  return table;
}

}  // namespace emff::kernels
