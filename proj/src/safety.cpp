#include "emff/safety.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "emff/allocation.hpp"

namespace emff {

namespace {

// Incidence sign of satellite m in pair k's difference, as a double multiplier.
inline double sig(const PairIndex& pairs, int m, int k) { return pairs.sign(m, k); }

// Coupling of pair k's relative acceleration to pair k2's normalized force:
// dvdot_k = gain * sum_k2 c(k,k2) zeta_k2 with c in {-2,...,2} and c(k,k)=2.
inline double pair_coupling(const PairIndex& pairs, int k, int k2) {
  return sig(pairs, pairs.lo(k), k2) - sig(pairs, pairs.hi(k), k2);
}

}  // namespace

std::vector<double> BarrierValues::args() const {
  std::vector<double> out;
  out.reserve(R2.size() + V1.size() + Q.size());
  out.insert(out.end(), R2.begin(), R2.end());
  out.insert(out.end(), V1.begin(), V1.end());
  out.insert(out.end(), Q.begin(), Q.end());
  return out;
}

std::string barrier_arg_name(const PairIndex& pairs, int arg) {
  const int np = pairs.count();
  if (arg < 0 || arg >= 2 * np + pairs.n())
    throw std::out_of_range("barrier_arg_name: argument index out of range");
  if (arg < np)
    return "R" + std::to_string(pairs.lo(arg) + 1) + std::to_string(pairs.hi(arg) + 1) + "_2";
  if (arg < 2 * np) {
    const int k = arg - np;
    return "V" + std::to_string(pairs.lo(k) + 1) + std::to_string(pairs.hi(k) + 1) + "_1";
  }
  return "Q" + std::to_string(arg - 2 * np + 1);
}

BarrierValues barrier_values(const CascadeState& cascade, const PhysicalParams& params,
                             const ConstraintParams& constraints, const CbfConfig& cbf,
                             const PairIndex& pairs) {
  const FormationState& x = cascade.x;
  if (x.n() != pairs.n() || cascade.nu.pairs() != pairs.count())
    throw std::invalid_argument("barrier_values: cascade/pairs size mismatch");
  const int n = pairs.n();
  const int np = pairs.count();
  const StateDerivative flow = drift(x, cascade.nu, params, pairs);  // guards separations

  BarrierValues b;
  b.R.resize(np);
  b.R1.resize(np);
  b.R2.resize(np);
  b.V.resize(np);
  b.V1.resize(np);
  b.Q.assign(n, constraints.q_max_VA);
  const double k0 = cbf.k0_per_s, k1 = cbf.k1_per_s, kv = cbf.kv_per_s;
  const double scale = params.power_scale();
  for (int k = 0; k < np; ++k) {
    const Vec3 r = pair_separation(x, pairs, k);
    const Vec3 v = pair_velocity(x, pairs, k);
    const Vec3 dvdot = flow.vdot[pairs.lo(k)] - flow.vdot[pairs.hi(k)];
    b.R[k] = 0.5 * (r.squaredNorm() - constraints.r_min_m * constraints.r_min_m);
    b.R1[k] = r.dot(v) + k0 * b.R[k];
    b.R2[k] = v.squaredNorm() + r.dot(dvdot) + k0 * r.dot(v) + k1 * b.R1[k];
    b.V[k] = 0.5 * (constraints.v_max_mps * constraints.v_max_mps - v.squaredNorm());
    b.V1[k] = -v.dot(dvdot) + kv * b.V[k];
    const double load = scale * params.pair_impedance_ohm(k) *
                        power_bound_psi(r, cascade.nu.f[k], constraints.eps1, constraints.eps2);
    b.Q[pairs.lo(k)] -= load;
    b.Q[pairs.hi(k)] -= load;
  }
  return b;
}

double soft_min(const std::vector<double>& values, double rho, std::vector<double>* weights) {
  if (values.empty()) throw std::invalid_argument("soft_min: empty argument list");
  if (!(rho > 0.0)) throw std::invalid_argument("soft_min: rho must be positive");
  const double zmin = *std::min_element(values.begin(), values.end());
  double total = 0.0;
  if (weights) weights->resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double e = std::exp(-rho * (values[i] - zmin));
    if (weights) (*weights)[i] = e;
    total += e;
  }
  if (weights)
    for (double& w : *weights) w /= total;
  return zmin - std::log(total) / rho;
}

VecX HGradient::dh_dx() const {
  const int n = static_cast<int>(dh_dr.size());
  VecX g(6 * n);
  for (int i = 0; i < n; ++i) {
    g.segment<3>(3 * i) = dh_dr[i];
    g.segment<3>(3 * (n + i)) = dh_dv[i];
  }
  return g;
}

VecX HGradient::dh_dnu_flat() const {
  VecX g(3 * static_cast<int>(dh_dnu.size()));
  for (std::size_t k = 0; k < dh_dnu.size(); ++k) g.segment<3>(3 * k) = dh_dnu[k];
  return g;
}

HGradient h_gradient(const CascadeState& cascade, const PhysicalParams& params,
                     const ConstraintParams& constraints, const CbfConfig& cbf,
                     const PairIndex& pairs) {
  const FormationState& x = cascade.x;
  const ForceVector& nu = cascade.nu;
  const int n = pairs.n();
  const int np = pairs.count();

  HGradient out;
  out.barriers = barrier_values(cascade, params, constraints, cbf, pairs);
  out.args = out.barriers.args();
  out.h = soft_min(out.args, cbf.rho, &out.weights);
  out.argmin = static_cast<int>(std::min_element(out.args.begin(), out.args.end()) -
                                out.args.begin());

  // Per-pair geometry and the power-bound gradients.
  const double gain = params.c0() / (2.0 * params.mass_kg);
  std::vector<Vec3> r(np), v(np), psi_r(np), psi_f(np);
  std::vector<double> inv4(np);
  for (int k = 0; k < np; ++k) {
    r[k] = pair_separation(x, pairs, k);
    v[k] = pair_velocity(x, pairs, k);
    const double d2 = r[k].squaredNorm();
    inv4[k] = 1.0 / (d2 * d2);
    power_bound_psi_gradient(r[k], nu.f[k], constraints.eps1, constraints.eps2, &psi_r[k],
                             &psi_f[k]);
  }
  const StateDerivative flow = drift(x, nu, params, pairs);

  out.dh_dr.assign(n, Vec3::Zero());
  out.dh_dv.assign(n, Vec3::Zero());
  out.dh_dnu.assign(np, Vec3::Zero());
  const double k0 = cbf.k0_per_s, k1 = cbf.k1_per_s, kv = cbf.kv_per_s;

  // Collision lifts R2 (soft-min arguments 0..np-1).
  for (int k = 0; k < np; ++k) {
    const double w = out.weights[k];
    const Vec3 dvdot = flow.vdot[pairs.lo(k)] - flow.vdot[pairs.hi(k)];
    const Vec3 ddr = dvdot + (k0 + k1) * v[k] + (k0 * k1) * r[k];
    const Vec3 ddv = 2.0 * v[k] + (k0 + k1) * r[k];
    for (const int m : {pairs.lo(k), pairs.hi(k)}) {
      out.dh_dr[m] += (w * sig(pairs, m, k)) * ddr;
      out.dh_dv[m] += (w * sig(pairs, m, k)) * ddv;
    }
    for (int k2 = 0; k2 < np; ++k2) {
      const double c = pair_coupling(pairs, k, k2);
      if (c == 0.0) continue;
      // r_k . dvdot_k depends on |r_k2| through zeta_k2 = nu_k2 / |r_k2|^4.
      const double coef =
          w * gain * c * r[k].dot(nu.f[k2]) * (-4.0 * inv4[k2] / r[k2].squaredNorm());
      for (const int m : {pairs.lo(k2), pairs.hi(k2)})
        out.dh_dr[m] += (coef * sig(pairs, m, k2)) * r[k2];
      out.dh_dnu[k2] += (w * gain * c * inv4[k2]) * r[k];
    }
  }

  // Speed lifts V1 (arguments np..2np-1).
  for (int k = 0; k < np; ++k) {
    const double w = out.weights[np + k];
    const Vec3 dvdot = flow.vdot[pairs.lo(k)] - flow.vdot[pairs.hi(k)];
    const Vec3 ddv = dvdot + kv * v[k];
    for (const int m : {pairs.lo(k), pairs.hi(k)}) out.dh_dv[m] -= (w * sig(pairs, m, k)) * ddv;
    for (int k2 = 0; k2 < np; ++k2) {
      const double c = pair_coupling(pairs, k, k2);
      if (c == 0.0) continue;
      const double coef =
          w * gain * c * v[k].dot(nu.f[k2]) * (4.0 * inv4[k2] / r[k2].squaredNorm());
      for (const int m : {pairs.lo(k2), pairs.hi(k2)})
        out.dh_dr[m] += (coef * sig(pairs, m, k2)) * r[k2];
      out.dh_dnu[k2] -= (w * gain * c * inv4[k2]) * v[k];
    }
  }

  // Power margins Q (arguments 2np..2np+n-1): each pair loads both members.
  const double scale = params.power_scale();
  for (int k = 0; k < np; ++k) {
    const double zk = scale * params.pair_impedance_ohm(k);
    const double w_pair = out.weights[2 * np + pairs.lo(k)] + out.weights[2 * np + pairs.hi(k)];
    if (w_pair == 0.0) continue;
    for (const int m : {pairs.lo(k), pairs.hi(k)})
      out.dh_dr[m] -= (w_pair * zk * sig(pairs, m, k)) * psi_r[k];
    out.dh_dnu[k] -= (w_pair * zk) * psi_f[k];
  }

  out.lie_drift = 0.0;
  for (int i = 0; i < n; ++i)
    out.lie_drift += out.dh_dr[i].dot(x.v[i]) + out.dh_dv[i].dot(flow.vdot[i]);
  for (int k = 0; k < np; ++k) out.lie_drift -= cbf.a_per_s * out.dh_dnu[k].dot(nu.f[k]);
  out.lie_control = cbf.a_per_s * out.dh_dnu_flat();
  return out;
}

ForceVector mu_desired(const CascadeState& cascade, const MpcPolicy& policy,
                       const PhysicalParams& params, const CbfConfig& cbf,
                       const PairIndex& pairs) {
  const ForceVector nu_d = policy.nu_desired(cascade.x);
  StateDerivative xdot = drift(cascade.x, cascade.nu, params, pairs);
  const ForceVector flow = policy.nu_desired_flow_derivative(cascade.x, xdot);
  ForceVector mu = ForceVector::zero(pairs.count());
  const double ratio = cbf.sigma_per_s / cbf.a_per_s;
  for (int k = 0; k < pairs.count(); ++k)
    mu.f[k] = cascade.nu.f[k] + ratio * (nu_d.f[k] - cascade.nu.f[k]) + flow.f[k] / cbf.a_per_s;
  return mu;
}

FilterOutput filter_control(const HGradient& grad, const ForceVector& mu_d, const CbfConfig& cbf) {
  FilterOutput out;
  out.h = grad.h;
  const VecX mu_d_flat = mu_d.flatten();
  out.omega = grad.lie_drift + grad.lie_control.dot(mu_d_flat) + cbf.alpha_per_s * grad.h;
  if (out.omega >= 0.0) {
    out.mu_star = mu_d;
    return out;
  }
  const double denom = grad.lie_control.squaredNorm() + grad.h * grad.h / cbf.gamma_slack;
  if (denom < 1e-300)
    throw std::domain_error(
        "safety filter: constraint gradient vanished on the barrier boundary "
        "(regularity assumption violated)");
  out.lambda = -out.omega / denom;
  out.mu_star = ForceVector::unflatten(mu_d_flat + out.lambda * grad.lie_control);
  out.eta_star = out.lambda * grad.h / cbf.gamma_slack;
  out.active = true;
  return out;
}

double filter_residual_b(const HGradient& grad, const ForceVector& mu_hat, double eta_hat,
                         const CbfConfig& cbf) {
  return grad.lie_drift + grad.lie_control.dot(mu_hat.flatten()) + cbf.alpha_per_s * grad.h +
         eta_hat * grad.h;
}

}  // namespace emff
