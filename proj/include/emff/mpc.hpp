#pragma once

#include <vector>

#include "emff/model.hpp"
#include "emff/params.hpp"

namespace emff {

// Receding-horizon formation planner on the averaged linear model.  The
// horizon cost
//   sum_k  step * [ sum_pairs (r_ij - d_ij)' w_pos (r_ij - d_ij)
//                 + sum_pairs v_ij' w_vel v_ij + w_zeta |zeta_k|^2 ]
// under exact zero-order-hold discretization of the double integrator is an
// equality-constrained linear-quadratic problem; dynamic programming gives a
// time-varying affine policy, so the planned first interval is
// zeta_d(x) = -K0 x + g0 and one "solve" per control step is a mat-vec.
class MpcPolicy {
 public:
  MpcPolicy(const MpcConfig& cfg, const PhysicalParams& params, const PairIndex& pairs);

  // Planned pair-force profile for the first interval, stacked 3*pairs.
  VecX zeta_desired(const FormationState& state) const;

  // Demand in force units: nu_d = |r_k|^4 * zeta_d per pair.  Throws
  // std::domain_error when a pair separation is below kMinSeparationM.
  ForceVector nu_desired(const FormationState& state) const;

  // Directional derivative of nu_desired along state_dot by one-sided finite
  // difference; delta <= 0 uses the configured default.  When the perturbed
  // state violates the separation guard the stencil shrinks (up to 40
  // halvings) before giving up.
  ForceVector nu_desired_flow_derivative(const FormationState& state,
                                         const StateDerivative& state_dot, double delta = 0.0) const;

  // Open-loop rollout of the policy from `state`, returning the realized
  // horizon cost (matches the batch least-squares optimum).
  double predicted_cost(const FormationState& state) const;

  const MpcConfig& config() const { return cfg_; }
  const PairIndex& pairs() const { return pairs_; }
  int horizon_steps() const { return static_cast<int>(gain_.size()); }

 private:
  MpcConfig cfg_;
  PairIndex pairs_;
  MatX dyn_f_, dyn_g_;           // discrete-time x+ = F x + G u
  MatX cost_q_;                  // per-step state quadratic weight
  VecX cost_q_lin_;              // per-step state linear weight (tracking)
  double cost_const_ = 0.0;      // per-step constant completing the square
  MatX cost_r_;                  // per-step input weight
  std::vector<MatX> gain_;       // u_k = -gain_[k] x + feedforward_[k]
  std::vector<VecX> feedforward_;
};

}  // namespace emff
