#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emff/safety.hpp"

namespace emff {

// A complete closed-loop experiment: hardware, limits, gains, planner
// settings, initial conditions, and integrator settings.  Carriers are kept
// as exact rationals (omega = num/den * pi when times_pi) so the common
// period and the JSON round-trip are exact.
struct Scenario {
  struct Carrier {
    int i = 0, j = 0;  // 0-based satellite indices, i < j
    long long num = 0, den = 1;
    bool times_pi = true;
  };

  std::string name;
  int n = 0;
  PhysicalParams physical;  // omega_rad_per_s/period_s resolved from carriers
  std::vector<Carrier> carriers;
  ConstraintParams constraints;
  CbfConfig cbf;
  MpcConfig mpc;
  std::vector<Vec3> r0_m, v0_mps;
  ForceVector nu0;
  double duration_s = 200.0;
  double step_s = 0.01;       // averaged-model RK4 step
  double full_step_s = 5e-5;  // full-fidelity RK4 step

  // Fills physical.omega_rad_per_s and physical.period_s from `carriers`
  // (exact rational least common period).  Throws std::invalid_argument when
  // the carriers mix times_pi conventions or do not cover every pair.
  void resolve_carriers(const PairIndex& pairs);
};

// Everything checked before a run: parameter positivity, carrier plan,
// chain-consistent desired offsets (d_ik = d_ij + d_jk), and initial safe-set
// membership (R, R1, V, Q, h all >= 0).  Throws std::invalid_argument with a
// field-specific message.
void validate_scenario(const Scenario& scenario);

// The built-in three-satellite reference experiment: two constraint-shaped
// approach maneuvers under a 9 MVA power budget with 100/200/300 Hz carriers.
Scenario reference_scenario();

// Planner outputs sampled at an outer-step boundary and held across it.
struct HeldControl {
  ForceVector nu_d;
  ForceVector nu_d_flow;
};

HeldControl make_held_control(const MpcPolicy& policy, const CascadeState& cascade,
                              const PhysicalParams& params, const PairIndex& pairs);

// mu_d built from held planner outputs and the stage-local nu.
ForceVector held_mu_desired(const CascadeState& cascade, const HeldControl& held,
                            const CbfConfig& cbf);

struct SimContext {
  const PhysicalParams& params;
  const ConstraintParams& constraints;
  const CbfConfig& cbf;
  const PairIndex& pairs;
  const MpcPolicy* policy = nullptr;  // set -> held control refreshed on halved steps
  bool filter_enabled = true;
};

// One classical RK4 step of the joint dynamics
//   xdot = [v; accel(x, nu)],  nudot = a (mu - nu),
// with mu re-evaluated at every stage from the stage state (filtered, or
// mu_d when the filter is disabled).  A domain error inside a stage rejects
// the step, which is then taken as two half steps (at most `max_halvings`
// cumulative halvings; the held control is refreshed at half-step boundaries
// when ctx.policy is set).
CascadeState step_averaged(const CascadeState& cascade, double dt, const HeldControl& held,
                           const SimContext& ctx, int max_halvings = 10);

// Same integrator with a constant surrogate control (conservation and
// order-of-accuracy tests).
CascadeState step_averaged_fixed_mu(const CascadeState& cascade, double dt,
                                    const ForceVector& mu, const SimContext& ctx);

struct RunOptions {
  std::optional<std::string> out_dir;  // write CSV + JSON sidecar when set
  std::string stem = "run";            // output file stem
  int log_every = 1;                   // thin CSV rows to every k-th step
  bool filter_enabled = true;
  bool abort_on_violation = true;      // stop when a raw constraint dips below -1e-6
  std::optional<double> duration_s;    // override scenario duration
};

struct RunSummary {
  int steps = 0;
  double duration_s = 0.0;
  bool aborted = false;
  std::string abort_reason;
  double min_pair_distance_m = 0.0;
  double max_pair_speed_mps = 0.0;
  double max_power_proxy_VA = 0.0;  // impedance-weighted allocated amplitudes
  double min_h = 0.0;
  double min_raw_margin = 0.0;      // min over time of min(R, V, Q)
  std::vector<double> final_error_m;            // per pair |r_k - d_k|
  std::vector<std::pair<double, std::string>> argmin_trace;  // (t, token) on change
  CascadeState final_state;
};

// Closed loop on the averaged model: per outer step the planner is sampled
// (nu_d and its flow derivative), and the filtered surrogate control steers
// the cascade.  Logs one row per log_every steps plus the final state.
RunSummary run_averaged(const Scenario& scenario, const RunOptions& options = {});

struct FullRunSummary {
  int periods = 0;
  double duration_s = 0.0;
  bool aborted = false;
  std::string abort_reason;
  // Per period and satellite: |mean accel - averaged-model accel| relative
  // to the averaged-model accel at the period start.
  std::vector<std::vector<double>> accel_rel_error;
  double max_accel_rel_error = 0.0;
  CascadeState final_state;
};

// Full-fidelity run: amplitudes are reallocated from (x, nu) at every period
// boundary t = kT, moments oscillate at the carrier frequencies in global
// time, and positions integrate under the instantaneous dipole forces at the
// fine step.  nu follows its exact first-order response to the boundary
// filter output.  `window_s` must be a positive multiple of the common
// period; the fine step must resolve the fastest carrier (>= 64 samples).
FullRunSummary run_full(const Scenario& scenario, double window_s,
                        const RunOptions& options = {});

}  // namespace emff
