#pragma once

#include <string>
#include <vector>

#include "emff/model.hpp"
#include "emff/mpc.hpp"
#include "emff/params.hpp"

namespace emff {

// Raw constraint functions and their higher-order lifts, evaluated at one
// cascade state.  Index k runs over pairs, index i over satellites.
//   R[k]  = (|r_k|^2 - r_min^2)/2          collision clearance
//   R1[k] = r_k.v_k + k0 R[k]              first lift (relative degree 3 -> 2)
//   R2[k] = d/dt R1 + k1 R1                second lift (relative degree 1)
//   V[k]  = (v_max^2 - |v_k|^2)/2          relative-speed margin
//   V1[k] = -v_k.dvdot_k + kv V[k]         first lift (relative degree 1)
//   Q[i]  = q_max - power bound on the amplitudes satellite i must produce
struct BarrierValues {
  std::vector<double> R, R1, R2;
  std::vector<double> V, V1;
  std::vector<double> Q;

  // Soft-min arguments in the canonical order [R2 (pairs); V1 (pairs); Q (sats)].
  std::vector<double> args() const;
};

BarrierValues barrier_values(const CascadeState& cascade, const PhysicalParams& params,
                             const ConstraintParams& constraints, const CbfConfig& cbf,
                             const PairIndex& pairs);

// Name of soft-min argument `arg` ("R12_2", "V13_1", "Q3"; satellites 1-based).
std::string barrier_arg_name(const PairIndex& pairs, int arg);

// Log-sum-exp soft minimum, max-shifted so large -rho*z never overflows.
// Throws std::invalid_argument on an empty list or rho <= 0.  When `weights`
// is non-null it receives the softmax weights d(softmin)/dz_i (sum to 1).
double soft_min(const std::vector<double>& values, double rho,
                std::vector<double>* weights = nullptr);

// Composite barrier h plus everything the filter needs: the soft-min
// arguments and weights, the analytic gradient of h in the cascade state, and
// the Lie derivatives along the cascade vector field
//   d/dt [x; nu] = [A x + B zeta(x,nu); -a nu] + [0; a I] mu.
struct HGradient {
  double h = 0.0;
  BarrierValues barriers;
  std::vector<double> args;
  std::vector<double> weights;
  int argmin = 0;                 // index of the smallest argument
  std::vector<Vec3> dh_dr;        // per satellite
  std::vector<Vec3> dh_dv;        // per satellite
  std::vector<Vec3> dh_dnu;       // per pair
  double lie_drift = 0.0;         // L_phi h
  VecX lie_control;               // (L_G h)^T = a * dh/dnu, stacked 3*pairs

  VecX dh_dx() const;             // stacked [d/dr; d/dv], 6n
  VecX dh_dnu_flat() const;       // stacked, 3*pairs
};

HGradient h_gradient(const CascadeState& cascade, const PhysicalParams& params,
                     const ConstraintParams& constraints, const CbfConfig& cbf,
                     const PairIndex& pairs);

// Surrogate-control demand that makes nu track the planner's nu_d:
//   mu_d = nu + (sigma/a)(nu_d - nu) + (1/a) * d(nu_d)/dt along the flow.
ForceVector mu_desired(const CascadeState& cascade, const MpcPolicy& policy,
                       const PhysicalParams& params, const CbfConfig& cbf,
                       const PairIndex& pairs);

struct FilterOutput {
  ForceVector mu_star;
  double eta_star = 0.0;   // optimal slack
  double lambda = 0.0;     // constraint multiplier
  double omega = 0.0;      // constraint value at (mu_d, 0)
  double h = 0.0;
  bool active = false;     // true when the constraint bent mu away from mu_d
};

// Closed-form minimizer of |mu - mu_d|^2/2 + gamma eta^2/2 subject to the
// barrier constraint b >= 0.  When omega >= 0 the demand is already safe and
// mu_star is bitwise mu_d.  Throws std::domain_error when the constraint
// gradient degenerates (|L_G h|^2 + h^2/gamma below 1e-300) with omega < 0.
FilterOutput filter_control(const HGradient& grad, const ForceVector& mu_d, const CbfConfig& cbf);

// Constraint value b = L_phi h + L_G h * mu_hat + alpha*h + eta_hat*h.
double filter_residual_b(const HGradient& grad, const ForceVector& mu_hat, double eta_hat,
                         const CbfConfig& cbf);

}  // namespace emff
