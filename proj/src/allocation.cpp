#include "emff/allocation.hpp"

#include <cmath>

namespace emff {
namespace {

// a*b - c*d with a fused-multiply-add correction term (error ~1.5 ulp even
// under heavy cancellation).
double diff_of_products(double a, double b, double c, double d) {
  const double cd = c * d;
  const double err = std::fma(c, d, -cd);
  const double dop = std::fma(a, b, -cd);
  return dop - err;
}

// Square roots of the quantities under the allocation radicals may go
// fractionally negative from rounding; clamp within a relative band and
// refuse anything worse.
double guarded_sqrt(double v, double scale) {
  if (v < 0.0) {
    if (v >= -1e-12 * scale) v = 0.0;
    else throw std::domain_error("amplitude_pair: radical argument negative beyond tolerance");
  }
  return std::sqrt(v);
}

// sech^2 without overflow: 4 e^{-2|w|} / (1 + e^{-2|w|})^2.
double sech_squared(double w) {
  const double e = std::exp(-2.0 * std::abs(w));
  const double denom = 1.0 + e;
  return 4.0 * e / (denom * denom);
}

}  // namespace

Vec3 stable_cross(const Vec3& a, const Vec3& b) {
  return {diff_of_products(a.y(), b.z(), a.z(), b.y()),
          diff_of_products(a.z(), b.x(), a.x(), b.z()),
          diff_of_products(a.x(), b.y(), a.y(), b.x())};
}

AmplitudePair amplitude_pair(const Vec3& r, const Vec3& f_star) {
  if (!r.allFinite() || !f_star.allFinite())
    throw std::invalid_argument("amplitude_pair: non-finite input");
  const double dist = r.norm();
  if (dist == 0.0) throw std::domain_error("amplitude_pair: zero separation");

  const double fnorm = f_star.norm();
  if (fnorm == 0.0) return {Vec3::Zero(), Vec3::Zero()};

  const double d = r.dot(f_star);       // r.f*
  const double s = sgn(d);
  const double P = dist * fnorm;        // |r||f*|
  const Vec3 cp = stable_cross(r, f_star);
  const double phi2 = cp.norm();                    // sqrt(|r|^2|f|^2 - d^2)
  const double phi1 = std::hypot(P, phi2);          // sqrt(2|r|^2|f|^2 - d^2)
  const double phi3 = (s == 0.0) ? 2.0 * std::sqrt(2.0) * P : phi1;

  // -|d| + phi1 rationalized: (phi1^2 - d^2) / (phi1 + |d|) = 2 phi2^2 / (...),
  // which avoids the subtractive cancellation of the aligned cones.
  const double ad = std::abs(d);
  const double minus1 = 2.0 * phi2 * phi2 / (phi1 + ad);
  const double minus3 = (s == 0.0) ? phi3 : minus1;

  const double scale = (phi1 + ad) / dist;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double a_x = -(s / 2.0) * guarded_sqrt((ad + phi1) / dist, scale);
  const double a_y = sgn(phi2) * inv_sqrt2 * guarded_sqrt(minus3 / dist, scale);
  const double b_x = 0.5 * guarded_sqrt((ad + phi3) / dist, scale);
  const double b_y = -sgn(d) * sgn(phi2) * inv_sqrt2 * guarded_sqrt(minus1 / dist, scale);

  // Rotated frame: e1 along r, e2 along the in-plane component of f*.  Both
  // amplitudes lie in span(e1, e2); the third frame vector never enters.
  // When f* is (anti)parallel to r the in-plane direction is completed by
  // Gram-Schmidt; the e2 amplitude components vanish in that cone anyway.
  const Vec3 e1 = r / dist;
  Vec3 e2;
  if (phi2 >= 1e-12 * P) {
    e2 = (dist * dist * f_star - d * r) / (dist * phi2);
  } else {
    const Vec3 probe = std::abs(e1.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    e2 = (probe - probe.dot(e1) * e1).normalized();
  }

  return {a_x * e1 + a_y * e2, b_x * e1 + b_y * e2};
}

AmplitudeSet allocate_all(const FormationState& state, const ForceVector& nu,
                          const PairIndex& pairs) {
  if (state.n() != pairs.n() || nu.pairs() != pairs.count())
    throw std::invalid_argument("allocate_all: state/nu size mismatch");
  AmplitudeSet amps = AmplitudeSet::zero(pairs.count());
  for (int k = 0; k < pairs.count(); ++k) {
    const Vec3 r = pair_separation(state, pairs, k);
    if (r.norm() < kMinSeparationM)
      throw std::domain_error("allocate_all: satellites " + std::to_string(pairs.lo(k) + 1) +
                              " and " + std::to_string(pairs.hi(k) + 1) + " are coincident");
    const AmplitudePair ap = amplitude_pair(r, nu.f[k]);
    amps.lo[k] = ap.c1;
    amps.hi[k] = ap.c2;
  }
  return amps;
}

double power_bound_psi(const Vec3& r, const Vec3& f, double eps1, double eps2) {
  const double dist = r.norm();
  if (dist == 0.0) throw std::domain_error("power_bound_psi: zero separation");
  const double d = r.dot(f);
  const double u = d / dist;
  const double P = dist * f.norm();
  const double phi2sq = stable_cross(r, f).squaredNorm();
  // 2|r|^2|f|^2 - d^2 = P^2 + phi2^2, free of cancellation.
  const double S = P * P + phi2sq + eps2 * dist * dist;
  return -0.25 * u * std::tanh(u / eps1) + std::sqrt(S) / dist;
}

void power_bound_psi_gradient(const Vec3& r, const Vec3& f, double eps1, double eps2, Vec3* d_dr,
                              Vec3* d_df) {
  const double dist = r.norm();
  if (dist == 0.0) throw std::domain_error("power_bound_psi_gradient: zero separation");
  const double dist2 = dist * dist;
  const double d = r.dot(f);
  const double u = d / dist;
  const double w = u / eps1;
  const double th = std::tanh(w);
  const double dpsi1_du = -0.25 * (th + w * sech_squared(w));
  const Vec3 du_dr = f / dist - (d / (dist2 * dist)) * r;
  const Vec3 du_df = r / dist;

  const double fn2 = f.squaredNorm();
  const double P = dist * f.norm();
  const double phi2sq = stable_cross(r, f).squaredNorm();
  const double S = P * P + phi2sq + eps2 * dist2;
  const double sqrtS = std::sqrt(S);
  const Vec3 dS_dr = 4.0 * fn2 * r - 2.0 * d * f + 2.0 * eps2 * r;
  const Vec3 dS_df = 4.0 * dist2 * f - 2.0 * d * r;
  const Vec3 dpsi2_dr = dS_dr / (2.0 * sqrtS * dist) - (sqrtS / (dist2 * dist)) * r;
  const Vec3 dpsi2_df = dS_df / (2.0 * sqrtS * dist);

  if (d_dr) *d_dr = dpsi1_du * du_dr + dpsi2_dr;
  if (d_df) *d_df = dpsi1_du * du_df + dpsi2_df;
}

}  // namespace emff
