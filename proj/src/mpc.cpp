#include "emff/mpc.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace emff {

namespace {

// Symmetry plus positive-definiteness check for a 3x3 stage weight.
void require_spd3(const Mat3& w, const char* name) {
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + w.cwiseAbs().maxCoeff()))
    throw std::invalid_argument(std::string("mpc: ") + name + " must be symmetric");
  Eigen::LLT<Mat3> llt(w);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string("mpc: ") + name + " must be positive definite");
}

}  // namespace

MpcPolicy::MpcPolicy(const MpcConfig& cfg, const PhysicalParams& params, const PairIndex& pairs)
    : cfg_(cfg), pairs_(pairs) {
  if (!(cfg.step_s > 0.0)) throw std::invalid_argument("mpc: step_s must be positive");
  if (!(cfg.horizon_s > 0.0)) throw std::invalid_argument("mpc: horizon_s must be positive");
  const double steps_real = cfg.horizon_s / cfg.step_s;
  const int steps = static_cast<int>(std::llround(steps_real));
  if (steps < 1 || std::abs(steps_real - steps) > 1e-9 * std::max(1.0, steps_real))
    throw std::invalid_argument("mpc: step_s must divide horizon_s");
  require_spd3(cfg.w_pos, "w_pos");
  require_spd3(cfg.w_vel, "w_vel");
  if (!(cfg.w_zeta > 0.0)) throw std::invalid_argument("mpc: w_zeta must be positive");
  if (static_cast<int>(cfg.desired_m.size()) != pairs.count())
    throw std::invalid_argument("mpc: desired_m needs one entry per pair");
  if (!(cfg.flow_fd_delta_s > 0.0))
    throw std::invalid_argument("mpc: flow_fd_delta_s must be positive");

  const int n = pairs.n();
  const int np = pairs.count();
  const int nx = 6 * n;   // stacked positions then velocities
  const int nu = 3 * np;  // stacked per-pair normalized forces
  const double dt = cfg.step_s;
  const double gain = params.c0() / (2.0 * params.mass_kg);

  // Exact zero-order-hold discretization of rdot = v, vdot = gain*(B0 (x) I3) u.
  const MatX b0 = build_B0(pairs);
  MatX bv = MatX::Zero(3 * n, nu);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < np; ++k)
      if (b0(i, k) != 0.0)
        bv.block<3, 3>(3 * i, 3 * k) = (gain * b0(i, k)) * Mat3::Identity();
  dyn_f_ = MatX::Identity(nx, nx);
  dyn_f_.topRightCorner(3 * n, 3 * n) = dt * MatX::Identity(3 * n, 3 * n);
  dyn_g_ = MatX::Zero(nx, nu);
  dyn_g_.topRows(3 * n) = (0.5 * dt * dt) * bv;
  dyn_g_.bottomRows(3 * n) = dt * bv;

  // Stage cost  dt * [ sum_k (r_k - d_k)' Wp (r_k - d_k) + sum_k v_k' Wv v_k ]
  // as  x' Q x - 2 q' x + const,  with the pair differences read off through
  // the incidence structure: r_k = (selector) x.
  MatX sel_pos = MatX::Zero(nu, nx);
  MatX sel_vel = MatX::Zero(nu, nx);
  for (int k = 0; k < np; ++k) {
    sel_pos.block<3, 3>(3 * k, 3 * pairs.lo(k)) = Mat3::Identity();
    sel_pos.block<3, 3>(3 * k, 3 * pairs.hi(k)) = -Mat3::Identity();
    sel_vel.block<3, 3>(3 * k, 3 * (n + pairs.lo(k))) = Mat3::Identity();
    sel_vel.block<3, 3>(3 * k, 3 * (n + pairs.hi(k))) = -Mat3::Identity();
  }
  MatX wp_blk = MatX::Zero(nu, nu);
  MatX wv_blk = MatX::Zero(nu, nu);
  for (int k = 0; k < np; ++k) {
    wp_blk.block<3, 3>(3 * k, 3 * k) = cfg.w_pos;
    wv_blk.block<3, 3>(3 * k, 3 * k) = cfg.w_vel;
  }
  VecX d_stack(nu);
  for (int k = 0; k < np; ++k) d_stack.segment<3>(3 * k) = cfg.desired_m[k];
  cost_q_ = dt * (sel_pos.transpose() * wp_blk * sel_pos + sel_vel.transpose() * wv_blk * sel_vel);
  cost_q_lin_ = dt * (sel_pos.transpose() * (wp_blk * d_stack));
  cost_const_ = dt * d_stack.dot(wp_blk * d_stack);
  const double input_weight = dt * cfg.w_zeta;
  cost_r_ = input_weight * MatX::Identity(nu, nu);

  // Backward dynamic-programming sweep.  The value beyond the last penalized
  // state is zero; each pass folds in one stage cost and one input choice,
  // yielding the affine policy u_k = -gain_[k] x + feedforward_[k].
  gain_.assign(steps, MatX());
  feedforward_.assign(steps, VecX());
  MatX value_p = MatX::Zero(nx, nx);
  VecX value_s = VecX::Zero(nx);
  for (int k = steps - 1; k >= 0; --k) {
    const MatX m = cost_q_ + value_p;
    const VecX mv = cost_q_lin_ + value_s;
    MatX h = dyn_g_.transpose() * m * dyn_g_ + cost_r_;
    Eigen::LLT<MatX> llt(h);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("mpc: stage Hessian not positive definite");
    gain_[k] = llt.solve(dyn_g_.transpose() * (m * dyn_f_));
    feedforward_[k] = llt.solve(dyn_g_.transpose() * mv);
    const MatX f_cl = dyn_f_ - dyn_g_ * gain_[k];
    value_p = gain_[k].transpose() * cost_r_ * gain_[k] + f_cl.transpose() * m * f_cl;
    value_p = 0.5 * (value_p + value_p.transpose());
    value_s = gain_[k].transpose() * (cost_r_ * feedforward_[k]) +
              f_cl.transpose() * (mv - m * (dyn_g_ * feedforward_[k]));
  }
}

VecX MpcPolicy::zeta_desired(const FormationState& state) const {
  if (state.n() != pairs_.n()) throw std::invalid_argument("mpc: state size mismatch");
  return feedforward_[0] - gain_[0] * state.flatten();
}

ForceVector MpcPolicy::nu_desired(const FormationState& state) const {
  const VecX zd = zeta_desired(state);
  ForceVector nu = ForceVector::zero(pairs_.count());
  for (int k = 0; k < pairs_.count(); ++k) {
    const double dist = pair_separation(state, pairs_, k).norm();
    if (dist < kMinSeparationM)
      throw std::domain_error("mpc: satellites " + std::to_string(pairs_.lo(k) + 1) + " and " +
                              std::to_string(pairs_.hi(k) + 1) + " are coincident");
    const double d2 = dist * dist;
    nu.f[k] = (d2 * d2) * zd.segment<3>(3 * k);
  }
  return nu;
}

ForceVector MpcPolicy::nu_desired_flow_derivative(const FormationState& state,
                                                  const StateDerivative& state_dot,
                                                  double delta) const {
  if (static_cast<int>(state_dot.rdot.size()) != state.n() ||
      static_cast<int>(state_dot.vdot.size()) != state.n())
    throw std::invalid_argument("mpc: state_dot size mismatch");
  const ForceVector base = nu_desired(state);
  double step = delta > 0.0 ? delta : cfg_.flow_fd_delta_s;
  for (int attempt = 0; attempt < 40; ++attempt, step *= 0.5) {
    FormationState probe = state;
    for (int i = 0; i < state.n(); ++i) {
      probe.r[i] += step * state_dot.rdot[i];
      probe.v[i] += step * state_dot.vdot[i];
    }
    ForceVector out;
    try {
      out = nu_desired(probe);
    } catch (const std::domain_error&) {
      continue;  // perturbed state crossed the separation guard; shrink
    }
    for (int k = 0; k < out.pairs(); ++k) out.f[k] = (out.f[k] - base.f[k]) / step;
    return out;
  }
  throw std::domain_error("mpc: flow derivative stencil cannot avoid coincident satellites");
}

double MpcPolicy::predicted_cost(const FormationState& state) const {
  if (state.n() != pairs_.n()) throw std::invalid_argument("mpc: state size mismatch");
  VecX x = state.flatten();
  double total = 0.0;
  for (std::size_t k = 0; k < gain_.size(); ++k) {
    const VecX u = feedforward_[k] - gain_[k] * x;
    total += u.dot(cost_r_ * u);
    x = dyn_f_ * x + dyn_g_ * u;
    total += x.dot(cost_q_ * x) - 2.0 * cost_q_lin_.dot(x) + cost_const_;
  }
  return total;
}

}  // namespace emff
