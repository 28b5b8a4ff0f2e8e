#include "emff/amff.hpp"

#include <algorithm>
#include <cmath>

#include "emff/kernels.hpp"

namespace emff {
namespace {

// Component-split line buffers in the kernels' layout.
struct LineBuffers {
  std::vector<double> omega, ax, ay, az;

  void push(double w, const Vec3& amp) {
    omega.push_back(w);
    ax.push_back(amp.x());
    ay.push_back(amp.y());
    az.push_back(amp.z());
  }

  kernels::MomentLines view() const { return {omega, ax, ay, az}; }
};

LineBuffers satellite_lines(int sat, const AmplitudeSet& amps, const PhysicalParams& params,
                            const PairIndex& pairs) {
  LineBuffers lb;
  for (int other = 0; other < pairs.n(); ++other) {
    if (other == sat) continue;
    const int k = pairs.at(sat, other);
    lb.push(params.omega_rad_per_s.at(k), amps.toward(sat, other, pairs));
  }
  return lb;
}

Vec3 synthesize(const LineBuffers& lb, double t) {
  Vec3 u = Vec3::Zero();
  for (std::size_t l = 0; l < lb.omega.size(); ++l) {
    const double s = std::sin(lb.omega[l] * t);
    u += s * Vec3(lb.ax[l], lb.ay[l], lb.az[l]);
  }
  return u;
}

Vec3 averaged_force(const Vec3& r, const LineBuffers& li, const LineBuffers& lj, double period_s,
                    std::size_t samples) {
  if (r.norm() == 0.0) throw std::domain_error("time_averaged_force: zero separation");
  if (!(period_s > 0.0)) throw std::invalid_argument("time_averaged_force: period must be positive");
  if (samples == 0) {
    double w_max = 0.0;
    for (double w : li.omega) w_max = std::max(w_max, w);
    for (double w : lj.omega) w_max = std::max(w_max, w);
    // At least 64 samples of the shortest period 2*pi/w_max, and never fewer
    // than 64 overall.
    const double per_period = w_max > 0.0 ? 64.0 * period_s * w_max / (2.0 * kPi) : 0.0;
    samples = static_cast<std::size_t>(std::ceil(std::max(64.0, per_period)));
  }
  const double dt = period_s / static_cast<double>(samples);
  const auto sum = kernels::active_kernels().pair_force_sum({r.x(), r.y(), r.z()}, li.view(),
                                                            lj.view(), 0.0, dt, samples);
  // Left-endpoint sum -> trapezoid: drop half of f(0), add half of f(T).
  const Vec3 f0 = dipole_force_f(r, synthesize(li, 0.0), synthesize(lj, 0.0));
  const Vec3 fT = dipole_force_f(r, synthesize(li, period_s), synthesize(lj, period_s));
  const Vec3 integral = (Vec3(sum[0], sum[1], sum[2]) - 0.5 * f0 + 0.5 * fT) * dt;
  return integral / period_s;
}

}  // namespace

Vec3 moment_at(int sat, double t, const AmplitudeSet& amps, const PhysicalParams& params,
               const PairIndex& pairs) {
  return synthesize(satellite_lines(sat, amps, params, pairs), t);
}

std::vector<Vec3> full_accelerations(const FormationState& state, const AmplitudeSet& amps,
                                     double t, const PhysicalParams& params,
                                     const PairIndex& pairs) {
  std::vector<Vec3> u(state.n());
  for (int i = 0; i < state.n(); ++i) u[i] = moment_at(i, t, amps, params, pairs);
  std::vector<Vec3> accel(state.n(), Vec3::Zero());
  const double c0_over_m = params.c0() / params.mass_kg;
  for (int k = 0; k < pairs.count(); ++k) {
    const Vec3 r = pair_separation(state, pairs, k);
    const double dist = r.norm();
    if (dist < kMinSeparationM)
      throw std::domain_error("full_accelerations: coincident satellites in pair " +
                              std::to_string(k));
    const double d2 = dist * dist;
    const Vec3 force_dir = dipole_force_f(r, u[pairs.lo(k)], u[pairs.hi(k)]);
    const Vec3 a = (c0_over_m / (d2 * d2)) * force_dir;
    accel[pairs.lo(k)] += a;
    accel[pairs.hi(k)] -= a;
  }
  return accel;
}

Vec3 time_averaged_force_lines(const Vec3& r, std::span<const std::pair<double, Vec3>> lines_i,
                               std::span<const std::pair<double, Vec3>> lines_j, double period_s,
                               std::size_t samples) {
  LineBuffers li, lj;
  for (const auto& [w, amp] : lines_i) li.push(w, amp);
  for (const auto& [w, amp] : lines_j) lj.push(w, amp);
  return averaged_force(r, li, lj, period_s, samples);
}

Vec3 time_averaged_pair_force(const Vec3& r, int k, const AmplitudeSet& amps,
                              const PhysicalParams& params, const PairIndex& pairs,
                              std::size_t samples) {
  const LineBuffers li = satellite_lines(pairs.lo(k), amps, params, pairs);
  const LineBuffers lj = satellite_lines(pairs.hi(k), amps, params, pairs);
  return averaged_force(r, li, lj, params.period_s, samples);
}

}  // namespace emff
