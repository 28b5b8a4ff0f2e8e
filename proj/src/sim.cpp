#include "emff/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "emff/allocation.hpp"
#include "emff/amff.hpp"
#include "emff/kernels.hpp"
#include "emff/runlog.hpp"
#include "emff/scenario_io.hpp"

namespace emff {

namespace {

// ---------------------------------------------------------------------------
// Exact rational common period of the carrier set.
// ---------------------------------------------------------------------------

struct Rational {
  long long num = 0, den = 1;
};

long long checked_mul(long long a, long long b) {
  long long out = 0;
  if (__builtin_mul_overflow(a, b, &out))
    throw std::invalid_argument("physical.carriers: common period overflows; use smaller ratios");
  return out;
}

Rational reduced(long long num, long long den) {
  const long long g = std::gcd(num, den);
  return {num / g, den / g};
}

// lcm(a/b, c/d) = lcm(a,c)/gcd(b,d) for reduced fractions.
Rational rational_lcm(const Rational& a, const Rational& b) {
  const long long g = std::gcd(a.num, b.num);
  return {checked_mul(a.num / g, b.num), std::gcd(a.den, b.den)};
}

// 1-based pair label, e.g. "12" for the pair of satellites 1 and 2.
std::string pair_label(const PairIndex& pairs, int k) {
  return std::to_string(pairs.lo(k) + 1) + std::to_string(pairs.hi(k) + 1);
}

}  // namespace

void Scenario::resolve_carriers(const PairIndex& pairs) {
  if (static_cast<int>(carriers.size()) != pairs.count())
    throw std::invalid_argument("physical.carriers: need exactly one carrier per pair");
  physical.omega_rad_per_s.assign(pairs.count(), 0.0);
  std::vector<bool> seen(pairs.count(), false);
  const bool pi_mode = carriers.front().times_pi;
  Rational period{1, 1};
  bool first = true;
  for (const Carrier& c : carriers) {
    if (c.num <= 0 || c.den <= 0)
      throw std::invalid_argument("physical.carriers: num/den must be positive");
    if (c.times_pi != pi_mode)
      throw std::invalid_argument(
          "physical.carriers: all carriers must share the times_pi convention");
    const int k = pairs.at(c.i, c.j);
    if (seen[k]) throw std::invalid_argument("physical.carriers: duplicate pair");
    seen[k] = true;
    physical.omega_rad_per_s[k] =
        static_cast<double>(c.num) / static_cast<double>(c.den) * (pi_mode ? kPi : 1.0);
    // Pair period in seconds: 2*den/num (times pi carriers) else 2*pi*den/num;
    // the uniform pi factor is reattached after the least common multiple.
    const Rational pair_period = reduced(2 * c.den, c.num);
    period = first ? pair_period : rational_lcm(period, pair_period);
    first = false;
  }
  const double ratio = static_cast<double>(period.num) / static_cast<double>(period.den);
  physical.period_s = pi_mode ? ratio : kPi * ratio;
}

void validate_scenario(const Scenario& s) {
  if (s.n < 2) throw std::invalid_argument("satellite_count: need at least 2 satellites");
  const PairIndex pairs(s.n);
  if (static_cast<int>(s.r0_m.size()) != s.n || static_cast<int>(s.v0_mps.size()) != s.n)
    throw std::invalid_argument("initial: need one position and velocity per satellite");
  if (s.nu0.pairs() != pairs.count())
    throw std::invalid_argument("initial.nu0_A2m4: need one entry per pair");
  s.physical.validate(pairs);

  if (!(s.constraints.r_min_m > 0.0))
    throw std::invalid_argument("constraints.r_min_m must be positive");
  if (!(s.constraints.v_max_mps > 0.0))
    throw std::invalid_argument("constraints.v_max_mps must be positive");
  if (!(s.constraints.q_max_VA > 0.0))
    throw std::invalid_argument("constraints.q_max_VA must be positive");
  if (!(s.constraints.eps1 > 0.0) || !(s.constraints.eps2 > 0.0))
    throw std::invalid_argument("constraints.eps1/eps2 must be positive");
  const double cbf_fields[] = {s.cbf.a_per_s,  s.cbf.sigma_per_s, s.cbf.rho,
                               s.cbf.k0_per_s, s.cbf.k1_per_s,    s.cbf.kv_per_s,
                               s.cbf.alpha_per_s, s.cbf.gamma_slack};
  for (const double v : cbf_fields)
    if (!(v > 0.0)) throw std::invalid_argument("cbf: all gains must be positive");
  if (!(s.duration_s > 0.0) || !(s.step_s > 0.0) || !(s.full_step_s > 0.0))
    throw std::invalid_argument("integration: duration_s/step_s/full_step_s must be positive");

  // Structural planner checks (weights, horizon) happen in the policy ctor.
  MpcPolicy policy(s.mpc, s.physical, pairs);

  double dscale = 1.0;
  for (const Vec3& d : s.mpc.desired_m) dscale = std::max(dscale, d.cwiseAbs().maxCoeff());
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j)
      for (int k = j + 1; k < s.n; ++k) {
        const Vec3 gap = s.mpc.desired_m[pairs.at(i, k)] - s.mpc.desired_m[pairs.at(i, j)] -
                         s.mpc.desired_m[pairs.at(j, k)];
        if (gap.cwiseAbs().maxCoeff() > 1e-9 * dscale)
          throw std::invalid_argument(
              "mpc.desired_m: offsets are not chain-consistent for satellites (" +
              std::to_string(i + 1) + "," + std::to_string(j + 1) + "," + std::to_string(k + 1) +
              "): d_" + std::to_string(i + 1) + std::to_string(k + 1) + " must equal d_" +
              std::to_string(i + 1) + std::to_string(j + 1) + " + d_" + std::to_string(j + 1) +
              std::to_string(k + 1));
      }

  // Initial safe-set membership: every raw barrier, every first lift, and the
  // composite certificate must start nonnegative.
  CascadeState c;
  c.x.r = s.r0_m;
  c.x.v = s.v0_mps;
  c.nu = s.nu0;
  BarrierValues b;
  try {
    b = barrier_values(c, s.physical, s.constraints, s.cbf, pairs);
  } catch (const std::domain_error& e) {
    throw std::invalid_argument(std::string("initial state: ") + e.what());
  }
  const auto reject = [&](const std::string& name, double value) {
    throw std::invalid_argument("initial state outside the safe set: " + name + " = " +
                                CsvWriter::num(value));
  };
  for (int k = 0; k < pairs.count(); ++k) {
    if (b.R[k] < 0.0) reject("R" + pair_label(pairs, k), b.R[k]);
    if (b.R1[k] < 0.0) reject("R" + pair_label(pairs, k) + "_1", b.R1[k]);
    if (b.V[k] < 0.0) reject("V" + pair_label(pairs, k), b.V[k]);
  }
  for (int i = 0; i < s.n; ++i)
    if (b.Q[i] < 0.0) reject("Q" + std::to_string(i + 1), b.Q[i]);
  const double h = soft_min(b.args(), s.cbf.rho);
  if (h < 0.0) reject("h", h);
}

Scenario reference_scenario() {
  Scenario s;
  s.name = "three-satellite formation approach under collision, speed, and power limits";
  s.n = 3;
  const PairIndex pairs(3);
  s.physical.mass_kg = 15.0;
  s.physical.coil_turns = 400.0;
  s.physical.coil_area_m2 = 0.1963;
  s.physical.coil_resistance_ohm = 0.3673;
  s.physical.coil_inductance_H = 0.12;
  s.carriers = {{0, 1, 200, 1, true}, {0, 2, 400, 1, true}, {1, 2, 600, 1, true}};

  s.constraints.r_min_m = 1.0;
  s.constraints.v_max_mps = 1.0;
  s.constraints.q_max_VA = 9.0e6;
  s.constraints.eps1 = 1e-3;
  s.constraints.eps2 = 1e-3;

  s.cbf.a_per_s = 0.7;
  s.cbf.sigma_per_s = 3.0;
  s.cbf.rho = 10.0;
  s.cbf.k0_per_s = 5.0;
  s.cbf.k1_per_s = 5.0;
  s.cbf.kv_per_s = 5.0;
  s.cbf.alpha_per_s = 0.02;
  s.cbf.gamma_slack = 1e40;

  s.mpc.horizon_s = 10.0;
  s.mpc.step_s = 0.1;
  s.mpc.w_pos = Mat3::Identity();
  s.mpc.w_vel = 10.0 * Mat3::Identity();
  s.mpc.w_zeta = 1e-14;
  s.mpc.flow_fd_delta_s = 1e-4;
  s.mpc.desired_m.assign(3, Vec3::Zero());
  s.mpc.desired_m[pairs.at(0, 1)] = Vec3(1.1, 1.3, 0.5);
  s.mpc.desired_m[pairs.at(0, 2)] = Vec3(2.2, 2.6, 1.0);
  s.mpc.desired_m[pairs.at(1, 2)] = Vec3(1.1, 1.3, 0.5);

  s.r0_m = {Vec3(1.2, 6.4, 8.5), Vec3(2.5, 7.5, 9.0), Vec3(3.8, 8.6, 9.5)};
  s.v0_mps = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  s.nu0 = ForceVector::zero(3);
  s.duration_s = 200.0;
  s.step_s = 0.01;
  s.full_step_s = 5e-5;
  s.resolve_carriers(pairs);
  return s;
}

// ---------------------------------------------------------------------------
// Averaged-cascade integrator.
// ---------------------------------------------------------------------------

HeldControl make_held_control(const MpcPolicy& policy, const CascadeState& cascade,
                              const PhysicalParams& params, const PairIndex& pairs) {
  HeldControl held;
  held.nu_d = policy.nu_desired(cascade.x);
  const StateDerivative flow = drift(cascade.x, cascade.nu, params, pairs);
  held.nu_d_flow = policy.nu_desired_flow_derivative(cascade.x, flow);
  return held;
}

ForceVector held_mu_desired(const CascadeState& cascade, const HeldControl& held,
                            const CbfConfig& cbf) {
  ForceVector mu = ForceVector::zero(cascade.nu.pairs());
  const double ratio = cbf.sigma_per_s / cbf.a_per_s;
  for (int k = 0; k < mu.pairs(); ++k)
    mu.f[k] = cascade.nu.f[k] + ratio * (held.nu_d.f[k] - cascade.nu.f[k]) +
              held.nu_d_flow.f[k] / cbf.a_per_s;
  return mu;
}

namespace {

struct CascadeDeriv {
  std::vector<Vec3> rdot, vdot, nudot;
};

CascadeState advance(const CascadeState& s, double h, const CascadeDeriv& d) {
  CascadeState out = s;
  for (int i = 0; i < s.x.n(); ++i) {
    out.x.r[i] += h * d.rdot[i];
    out.x.v[i] += h * d.vdot[i];
  }
  for (int k = 0; k < s.nu.pairs(); ++k) out.nu.f[k] += h * d.nudot[k];
  return out;
}

template <typename Deriv>
CascadeState rk4(const CascadeState& s, double dt, Deriv&& deriv) {
  const CascadeDeriv k1 = deriv(s);
  const CascadeDeriv k2 = deriv(advance(s, 0.5 * dt, k1));
  const CascadeDeriv k3 = deriv(advance(s, 0.5 * dt, k2));
  const CascadeDeriv k4 = deriv(advance(s, dt, k3));
  CascadeState out = s;
  const double w = dt / 6.0;
  for (int i = 0; i < s.x.n(); ++i) {
    out.x.r[i] += w * (k1.rdot[i] + 2.0 * k2.rdot[i] + 2.0 * k3.rdot[i] + k4.rdot[i]);
    out.x.v[i] += w * (k1.vdot[i] + 2.0 * k2.vdot[i] + 2.0 * k3.vdot[i] + k4.vdot[i]);
  }
  for (int k = 0; k < s.nu.pairs(); ++k)
    out.nu.f[k] += w * (k1.nudot[k] + 2.0 * k2.nudot[k] + 2.0 * k3.nudot[k] + k4.nudot[k]);
  return out;
}

CascadeDeriv stage_derivative(const CascadeState& s, const ForceVector& mu, double a,
                              const PhysicalParams& params, const PairIndex& pairs) {
  const StateDerivative sd = drift(s.x, s.nu, params, pairs);
  CascadeDeriv d;
  d.rdot = sd.rdot;
  d.vdot = sd.vdot;
  d.nudot.resize(s.nu.pairs());
  for (int k = 0; k < s.nu.pairs(); ++k) d.nudot[k] = a * (mu.f[k] - s.nu.f[k]);
  return d;
}

CascadeDeriv filtered_stage(const CascadeState& s, const HeldControl& held,
                            const SimContext& ctx) {
  ForceVector mu = held_mu_desired(s, held, ctx.cbf);
  if (ctx.filter_enabled) {
    const HGradient grad = h_gradient(s, ctx.params, ctx.constraints, ctx.cbf, ctx.pairs);
    mu = filter_control(grad, mu, ctx.cbf).mu_star;
  }
  return stage_derivative(s, mu, ctx.cbf.a_per_s, ctx.params, ctx.pairs);
}

CascadeState step_recursive(const CascadeState& s, double dt, const HeldControl& held,
                            const SimContext& ctx, int& halvings_left) {
  try {
    return rk4(s, dt, [&](const CascadeState& stage) { return filtered_stage(stage, held, ctx); });
  } catch (const std::domain_error&) {
    if (halvings_left <= 0) throw;
    --halvings_left;
  }
  const CascadeState mid = step_recursive(s, 0.5 * dt, held, ctx, halvings_left);
  const HeldControl held2 =
      ctx.policy ? make_held_control(*ctx.policy, mid, ctx.params, ctx.pairs) : held;
  return step_recursive(mid, 0.5 * dt, held2, ctx, halvings_left);
}

}  // namespace

CascadeState step_averaged(const CascadeState& cascade, double dt, const HeldControl& held,
                           const SimContext& ctx, int max_halvings) {
  int budget = max_halvings;
  return step_recursive(cascade, dt, held, ctx, budget);
}

CascadeState step_averaged_fixed_mu(const CascadeState& cascade, double dt, const ForceVector& mu,
                                    const SimContext& ctx) {
  return rk4(cascade, dt, [&](const CascadeState& stage) {
    return stage_derivative(stage, mu, ctx.cbf.a_per_s, ctx.params, ctx.pairs);
  });
}

// ---------------------------------------------------------------------------
// Closed-loop averaged run with logging.
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> axis_columns(const std::string& prefix, const std::string& suffix) {
  return {prefix + "x" + suffix, prefix + "y" + suffix, prefix + "z" + suffix};
}

void push_vec(std::vector<std::string>& cells, const Vec3& v) {
  cells.push_back(CsvWriter::num(v.x()));
  cells.push_back(CsvWriter::num(v.y()));
  cells.push_back(CsvWriter::num(v.z()));
}

nlohmann::json summary_json(const RunSummary& sum) {
  nlohmann::json j;
  j["steps"] = sum.steps;
  j["duration_s"] = sum.duration_s;
  j["aborted"] = sum.aborted;
  j["abort_reason"] = sum.abort_reason;
  j["min_pair_distance_m"] = sum.min_pair_distance_m;
  j["max_pair_speed_mps"] = sum.max_pair_speed_mps;
  j["max_power_proxy_VA"] = sum.max_power_proxy_VA;
  j["min_h"] = sum.min_h;
  j["min_raw_margin"] = sum.min_raw_margin;
  j["final_error_m"] = sum.final_error_m;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [t, token] : sum.argmin_trace) trace.push_back({{"t_s", t}, {"argmin", token}});
  j["argmin_trace"] = trace;
  return j;
}

}  // namespace

RunSummary run_averaged(const Scenario& scenario, const RunOptions& options) {
  validate_scenario(scenario);
  const PairIndex pairs(scenario.n);
  const int n = scenario.n;
  const int np = pairs.count();
  const MpcPolicy policy(scenario.mpc, scenario.physical, pairs);
  const SimContext ctx{scenario.physical, scenario.constraints, scenario.cbf,
                       pairs,             &policy,              options.filter_enabled};

  CascadeState c;
  c.x.r = scenario.r0_m;
  c.x.v = scenario.v0_mps;
  c.nu = scenario.nu0;

  const double duration = options.duration_s.value_or(scenario.duration_s);
  const double dt = scenario.step_s;
  const long long steps = std::max<long long>(1, std::llround(duration / dt));
  const int log_every = std::max(1, options.log_every);

  std::optional<CsvWriter> csv;
  std::string out_base;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    out_base = (std::filesystem::path(*options.out_dir) / options.stem).string();
    csv.emplace(out_base + ".csv");
    std::vector<std::string> cols{"t_s"};
    for (int i = 0; i < n; ++i) {
      const auto rc = axis_columns("r" + std::to_string(i + 1), "_m");
      cols.insert(cols.end(), rc.begin(), rc.end());
    }
    for (int i = 0; i < n; ++i) {
      const auto vc = axis_columns("v" + std::to_string(i + 1), "_mps");
      cols.insert(cols.end(), vc.begin(), vc.end());
    }
    for (const char* base : {"nu", "mu"})
      for (int k = 0; k < np; ++k) {
        const auto cc = axis_columns(std::string(base) + pair_label(pairs, k), "_A2m4");
        cols.insert(cols.end(), cc.begin(), cc.end());
      }
    for (int k = 0; k < np; ++k) {
      const auto lo = axis_columns(
          "p" + std::to_string(pairs.lo(k) + 1) + std::to_string(pairs.hi(k) + 1), "_Am2");
      cols.insert(cols.end(), lo.begin(), lo.end());
      const auto hi = axis_columns(
          "p" + std::to_string(pairs.hi(k) + 1) + std::to_string(pairs.lo(k) + 1), "_Am2");
      cols.insert(cols.end(), hi.begin(), hi.end());
    }
    cols.push_back("h");
    for (int k = 0; k < np; ++k) cols.push_back("R" + pair_label(pairs, k) + "_2");
    for (int k = 0; k < np; ++k) cols.push_back("V" + pair_label(pairs, k) + "_1");
    for (int i = 0; i < n; ++i) cols.push_back("Q" + std::to_string(i + 1));
    for (int k = 0; k < np; ++k) cols.push_back("R" + pair_label(pairs, k));
    for (int k = 0; k < np; ++k) cols.push_back("R" + pair_label(pairs, k) + "_1");
    for (int k = 0; k < np; ++k) cols.push_back("V" + pair_label(pairs, k));
    for (int i = 0; i < n; ++i) cols.push_back("power" + std::to_string(i + 1) + "_VA");
    cols.push_back("lambda");
    cols.push_back("omega");
    cols.push_back("active");
    cols.push_back("argmin");
    csv->header(cols);
  }

  RunSummary sum;
  sum.min_pair_distance_m = std::numeric_limits<double>::infinity();
  sum.max_pair_speed_mps = 0.0;
  sum.max_power_proxy_VA = 0.0;
  sum.min_h = std::numeric_limits<double>::infinity();
  sum.min_raw_margin = std::numeric_limits<double>::infinity();
  const double kappa = scenario.physical.power_scale();
  std::string last_token;
  double simulated_s = 0.0;

  for (long long sidx = 0;; ++sidx) {
    const double t = static_cast<double>(sidx) * dt;

    HeldControl held;
    HGradient grad;
    ForceVector mu_d;
    FilterOutput filt;
    AmplitudeSet amps;
    try {
      held = make_held_control(policy, c, scenario.physical, pairs);
      grad = h_gradient(c, scenario.physical, scenario.constraints, scenario.cbf, pairs);
      mu_d = held_mu_desired(c, held, scenario.cbf);
      if (options.filter_enabled) {
        filt = filter_control(grad, mu_d, scenario.cbf);
      } else {
        filt.mu_star = mu_d;
        filt.h = grad.h;
        filt.omega = grad.lie_drift + grad.lie_control.dot(mu_d.flatten()) +
                     scenario.cbf.alpha_per_s * grad.h;
      }
      amps = allocate_all(c.x, c.nu, pairs);
    } catch (const std::domain_error& e) {
      sum.aborted = true;
      sum.abort_reason = std::string("domain error at t = ") + CsvWriter::num(t) + " s: " + e.what();
      break;
    }

    // Trackers.
    double min_raw = std::numeric_limits<double>::infinity();
    std::string min_raw_name;
    std::vector<double> power(n, 0.0);
    for (int k = 0; k < np; ++k) {
      const double dist = pair_separation(c.x, pairs, k).norm();
      const double speed = pair_velocity(c.x, pairs, k).norm();
      sum.min_pair_distance_m = std::min(sum.min_pair_distance_m, dist);
      sum.max_pair_speed_mps = std::max(sum.max_pair_speed_mps, speed);
      const double z = scenario.physical.pair_impedance_ohm(k);
      const double load_lo = kappa * z * amps.lo[k].squaredNorm();
      const double load_hi = kappa * z * amps.hi[k].squaredNorm();
      power[pairs.lo(k)] += load_lo;
      power[pairs.hi(k)] += load_hi;
      if (grad.barriers.R[k] < min_raw) {
        min_raw = grad.barriers.R[k];
        min_raw_name = "R" + pair_label(pairs, k);
      }
      if (grad.barriers.V[k] < min_raw) {
        min_raw = grad.barriers.V[k];
        min_raw_name = "V" + pair_label(pairs, k);
      }
    }
    for (int i = 0; i < n; ++i) {
      sum.max_power_proxy_VA = std::max(sum.max_power_proxy_VA, power[i]);
      if (grad.barriers.Q[i] < min_raw) {
        min_raw = grad.barriers.Q[i];
        min_raw_name = "Q" + std::to_string(i + 1);
      }
    }
    sum.min_h = std::min(sum.min_h, grad.h);
    sum.min_raw_margin = std::min(sum.min_raw_margin, min_raw);
    const std::string token = barrier_arg_name(pairs, grad.argmin);
    if (token != last_token) {
      sum.argmin_trace.emplace_back(t, token);
      last_token = token;
    }

    if (csv && (sidx % log_every == 0 || sidx == steps)) {
      std::vector<std::string> cells{CsvWriter::num(t)};
      for (int i = 0; i < n; ++i) push_vec(cells, c.x.r[i]);
      for (int i = 0; i < n; ++i) push_vec(cells, c.x.v[i]);
      for (int k = 0; k < np; ++k) push_vec(cells, c.nu.f[k]);
      for (int k = 0; k < np; ++k) push_vec(cells, filt.mu_star.f[k]);
      for (int k = 0; k < np; ++k) {
        push_vec(cells, amps.lo[k]);
        push_vec(cells, amps.hi[k]);
      }
      cells.push_back(CsvWriter::num(grad.h));
      for (int k = 0; k < np; ++k) cells.push_back(CsvWriter::num(grad.barriers.R2[k]));
      for (int k = 0; k < np; ++k) cells.push_back(CsvWriter::num(grad.barriers.V1[k]));
      for (int i = 0; i < n; ++i) cells.push_back(CsvWriter::num(grad.barriers.Q[i]));
      for (int k = 0; k < np; ++k) cells.push_back(CsvWriter::num(grad.barriers.R[k]));
      for (int k = 0; k < np; ++k) cells.push_back(CsvWriter::num(grad.barriers.R1[k]));
      for (int k = 0; k < np; ++k) cells.push_back(CsvWriter::num(grad.barriers.V[k]));
      for (int i = 0; i < n; ++i) cells.push_back(CsvWriter::num(power[i]));
      cells.push_back(CsvWriter::num(filt.lambda));
      cells.push_back(CsvWriter::num(filt.omega));
      cells.push_back(filt.active ? "1" : "0");
      cells.push_back(token);
      csv->row(cells);
    }

    if (options.abort_on_violation && min_raw < -1e-6) {
      sum.aborted = true;
      sum.abort_reason = "safe-set exit at t = " + CsvWriter::num(t) + " s: " + min_raw_name +
                         " = " + CsvWriter::num(min_raw);
      break;
    }
    if (sidx == steps) break;

    try {
      c = step_averaged(c, dt, held, ctx);
    } catch (const std::domain_error& e) {
      sum.aborted = true;
      sum.abort_reason =
          std::string("domain error within step at t = ") + CsvWriter::num(t) + " s: " + e.what();
      break;
    }
    simulated_s = static_cast<double>(sidx + 1) * dt;
    sum.steps = static_cast<int>(sidx + 1);
  }

  sum.duration_s = simulated_s;
  sum.final_state = c;
  sum.final_error_m.resize(np);
  for (int k = 0; k < np; ++k)
    sum.final_error_m[k] = (pair_separation(c.x, pairs, k) - scenario.mpc.desired_m[k]).norm();

  if (options.out_dir) {
    nlohmann::json meta;
    meta["scenario"] = nlohmann::json::parse(scenario_to_json_text(scenario));
    meta["run"] = {{"mode", "averaged"},
                   {"filter_enabled", options.filter_enabled},
                   {"log_every", log_every},
                   {"step_s", dt},
                   {"duration_s", duration},
                   {"kernel", kernels::active_kernels().name}};
    meta["summary"] = summary_json(sum);
    write_text_file(out_base + "_meta.json", meta.dump(2) + "\n");
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Full-fidelity run.
// ---------------------------------------------------------------------------

FullRunSummary run_full(const Scenario& scenario, double window_s, const RunOptions& options) {
  validate_scenario(scenario);
  const PairIndex pairs(scenario.n);
  const int n = scenario.n;
  const MpcPolicy policy(scenario.mpc, scenario.physical, pairs);

  const double period = scenario.physical.period_s;
  const long long periods = std::llround(window_s / period);
  if (periods < 1 || std::abs(static_cast<double>(periods) * period - window_s) > 1e-9 * window_s)
    throw std::invalid_argument("run_full: window must be a positive multiple of the common period " +
                                CsvWriter::num(period) + " s");
  double min_carrier_period = std::numeric_limits<double>::infinity();
  for (const double w : scenario.physical.omega_rad_per_s)
    min_carrier_period = std::min(min_carrier_period, 2.0 * kPi / w);
  const double h = scenario.full_step_s;
  if (h > min_carrier_period / 64.0 * (1.0 + 1e-12))
    throw std::invalid_argument(
        "run_full: full_step_s must sample the fastest carrier at least 64 times per cycle");
  const long long substeps = std::llround(period / h);
  if (substeps < 1 || std::abs(static_cast<double>(substeps) * h - period) > 1e-9 * period)
    throw std::invalid_argument("run_full: full_step_s must divide the common period");

  const int log_every = std::max(1, options.log_every);
  std::optional<CsvWriter> csv, period_csv;
  std::string out_base;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    out_base = (std::filesystem::path(*options.out_dir) / options.stem).string();
    csv.emplace(out_base + "_full.csv");
    std::vector<std::string> cols{"t_s"};
    for (int i = 0; i < n; ++i) {
      const auto rc = axis_columns("r" + std::to_string(i + 1), "_m");
      cols.insert(cols.end(), rc.begin(), rc.end());
    }
    for (int i = 0; i < n; ++i) {
      const auto vc = axis_columns("v" + std::to_string(i + 1), "_mps");
      cols.insert(cols.end(), vc.begin(), vc.end());
    }
    for (int i = 0; i < n; ++i) {
      const auto uc = axis_columns("u" + std::to_string(i + 1), "_Am2");
      cols.insert(cols.end(), uc.begin(), uc.end());
    }
    csv->header(cols);

    period_csv.emplace(out_base + "_full_periods.csv");
    std::vector<std::string> pcols{"period", "t_start_s"};
    for (int i = 0; i < n; ++i) {
      const auto mc = axis_columns("mean_a" + std::to_string(i + 1), "_mps2");
      pcols.insert(pcols.end(), mc.begin(), mc.end());
      const auto pc = axis_columns("model_a" + std::to_string(i + 1), "_mps2");
      pcols.insert(pcols.end(), pc.begin(), pc.end());
      pcols.push_back("rel_err" + std::to_string(i + 1));
    }
    period_csv->header(pcols);
  }

  CascadeState c;
  c.x.r = scenario.r0_m;
  c.x.v = scenario.v0_mps;
  c.nu = scenario.nu0;

  FullRunSummary sum;
  const auto log_row = [&](double t, const FormationState& x, const AmplitudeSet& amps) {
    if (!csv) return;
    std::vector<std::string> cells{CsvWriter::num(t)};
    for (int i = 0; i < n; ++i) push_vec(cells, x.r[i]);
    for (int i = 0; i < n; ++i) push_vec(cells, x.v[i]);
    for (int i = 0; i < n; ++i)
      push_vec(cells, moment_at(i, t, amps, scenario.physical, pairs));
    csv->row(cells);
  };

  for (long long p = 0; p < periods; ++p) {
    const double t0 = static_cast<double>(p) * period;
    AmplitudeSet amps;
    ForceVector mu_star;
    std::vector<Vec3> model_accel;
    try {
      amps = allocate_all(c.x, c.nu, pairs);
      const HeldControl held = make_held_control(policy, c, scenario.physical, pairs);
      const ForceVector mu_d = held_mu_desired(c, held, scenario.cbf);
      if (options.filter_enabled) {
        const HGradient grad =
            h_gradient(c, scenario.physical, scenario.constraints, scenario.cbf, pairs);
        mu_star = filter_control(grad, mu_d, scenario.cbf).mu_star;
      } else {
        mu_star = mu_d;
      }
      model_accel = drift(c.x, c.nu, scenario.physical, pairs).vdot;
    } catch (const std::domain_error& e) {
      sum.aborted = true;
      sum.abort_reason =
          std::string("domain error at t = ") + CsvWriter::num(t0) + " s: " + e.what();
      break;
    }

    const std::vector<Vec3> v_start = c.x.v;
    FormationState x = c.x;
    bool failed = false;
    for (long long sidx = 0; sidx < substeps; ++sidx) {
      const double t = t0 + static_cast<double>(sidx) * h;
      if (csv && ((p * substeps + sidx) % log_every == 0)) log_row(t, x, amps);
      try {
        // Classical RK4 on the oscillating-moment dynamics; the moments are
        // functions of absolute time, so stage times enter explicitly.
        const auto accel = [&](const FormationState& s, double ts) {
          return full_accelerations(s, amps, ts, scenario.physical, pairs);
        };
        const auto shift = [&](const FormationState& s, double hh,
                               const std::vector<Vec3>& dv, const std::vector<Vec3>& dr) {
          FormationState out = s;
          for (int i = 0; i < n; ++i) {
            out.r[i] += hh * dr[i];
            out.v[i] += hh * dv[i];
          }
          return out;
        };
        const std::vector<Vec3> a1 = accel(x, t);
        const FormationState s2 = shift(x, 0.5 * h, a1, x.v);
        const std::vector<Vec3> a2 = accel(s2, t + 0.5 * h);
        const FormationState s3 = shift(x, 0.5 * h, a2, s2.v);
        const std::vector<Vec3> a3 = accel(s3, t + 0.5 * h);
        const FormationState s4 = shift(x, h, a3, s3.v);
        const std::vector<Vec3> a4 = accel(s4, t + h);
        for (int i = 0; i < n; ++i) {
          x.r[i] += (h / 6.0) * (x.v[i] + 2.0 * s2.v[i] + 2.0 * s3.v[i] + s4.v[i]);
          x.v[i] += (h / 6.0) * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
      } catch (const std::domain_error& e) {
        sum.aborted = true;
        sum.abort_reason =
            std::string("domain error at t = ") + CsvWriter::num(t) + " s: " + e.what();
        failed = true;
        break;
      }
    }
    if (failed) break;

    // Period bookkeeping: realized mean acceleration vs. the averaged model.
    std::vector<double> rel(n, 0.0);
    std::vector<std::string> pcells{std::to_string(p), CsvWriter::num(t0)};
    for (int i = 0; i < n; ++i) {
      const Vec3 mean = (x.v[i] - v_start[i]) / period;
      const double scale = model_accel[i].norm();
      rel[i] = scale > 0.0 ? (mean - model_accel[i]).norm() / scale : (mean - model_accel[i]).norm();
      sum.max_accel_rel_error = std::max(sum.max_accel_rel_error, rel[i]);
      if (period_csv) {
        push_vec(pcells, mean);
        push_vec(pcells, model_accel[i]);
        pcells.push_back(CsvWriter::num(rel[i]));
      }
    }
    if (period_csv) period_csv->row(pcells);
    sum.accel_rel_error.push_back(rel);

    // Exact first-order response of nu to the boundary filter output.
    const double decay = std::exp(-scenario.cbf.a_per_s * period);
    for (int k = 0; k < pairs.count(); ++k)
      c.nu.f[k] = mu_star.f[k] + (c.nu.f[k] - mu_star.f[k]) * decay;
    c.x = x;
    sum.periods = static_cast<int>(p + 1);
    sum.duration_s = static_cast<double>(p + 1) * period;
  }

  sum.final_state = c;
  if (options.out_dir) {
    nlohmann::json meta;
    meta["scenario"] = nlohmann::json::parse(scenario_to_json_text(scenario));
    meta["run"] = {{"mode", "full"},
                   {"filter_enabled", options.filter_enabled},
                   {"log_every", log_every},
                   {"window_s", window_s},
                   {"full_step_s", h},
                   {"period_s", period},
                   {"kernel", kernels::active_kernels().name}};
    meta["summary"] = {{"periods", sum.periods},
                       {"duration_s", sum.duration_s},
                       {"aborted", sum.aborted},
                       {"abort_reason", sum.abort_reason},
                       {"max_accel_rel_error", sum.max_accel_rel_error}};
    write_text_file(out_base + "_full_meta.json", meta.dump(2) + "\n");
  }
  return sum;
}

}  // namespace emff
