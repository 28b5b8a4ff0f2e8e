#include "emff/scenario_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace emff {

namespace {

using nlohmann::json;

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ScenarioError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ScenarioError(path + "." + key, "missing required field");
  return *it;
}

double need_num(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number()) throw ScenarioError(path + "." + key, "expected a number");
  return v.get<double>();
}

double opt_num(const json& j, const char* key, const std::string& path, double fallback) {
  if (!j.is_object()) throw ScenarioError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw ScenarioError(path + "." + key, "expected a number");
  return it->get<double>();
}

long long need_int(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number_integer()) throw ScenarioError(path + "." + key, "expected an integer");
  return v.get<long long>();
}

bool need_bool(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_boolean()) throw ScenarioError(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

Vec3 as_vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ScenarioError(path, "expected an array of 3 numbers");
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    if (!v[c].is_number())
      throw ScenarioError(path + "[" + std::to_string(c) + "]", "expected a number");
    out[c] = v[c].get<double>();
  }
  return out;
}

Mat3 as_weight(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>() * Mat3::Identity();
  if (!v.is_array() || v.size() != 3)
    throw ScenarioError(path, "expected a scalar or a 3x3 array");
  Mat3 out;
  for (int rr = 0; rr < 3; ++rr) {
    const std::string rp = path + "[" + std::to_string(rr) + "]";
    if (!v[rr].is_array() || v[rr].size() != 3)
      throw ScenarioError(rp, "expected an array of 3 numbers");
    for (int c = 0; c < 3; ++c) {
      if (!v[rr][c].is_number())
        throw ScenarioError(rp + "[" + std::to_string(c) + "]", "expected a number");
      out(rr, c) = v[rr][c].get<double>();
    }
  }
  return out;
}

// Reads a 1-based satellite pair {i, j} with i < j into 0-based indices.
std::pair<int, int> need_pair(const json& j, int n, const std::string& path) {
  const long long i1 = need_int(j, "i", path);
  const long long j1 = need_int(j, "j", path);
  if (i1 < 1 || j1 < 1 || i1 > n || j1 > n || i1 >= j1)
    throw ScenarioError(path, "satellite pair must satisfy 1 <= i < j <= " + std::to_string(n));
  return {static_cast<int>(i1 - 1), static_cast<int>(j1 - 1)};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat3_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(origin + ", " + line_col(text, e.byte), "JSON parse error: " + std::string(e.what()));
  }

  Scenario s;
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ScenarioError("name", "expected a string");
    s.name = j["name"].get<std::string>();
  }
  const long long n = need_int(j, "satellite_count", "scenario");
  if (n < 2 || n > 64) throw ScenarioError("satellite_count", "need between 2 and 64 satellites");
  s.n = static_cast<int>(n);
  const PairIndex pairs(s.n);

  const json& phys = need(j, "physical", "scenario");
  s.physical.mass_kg = need_num(phys, "mass_kg", "physical");
  s.physical.mu0_Tm_per_A = opt_num(phys, "mu0_Tm_per_A", "physical", 4.0e-7 * kPi);
  s.physical.coil_turns = need_num(phys, "coil_turns", "physical");
  s.physical.coil_area_m2 = need_num(phys, "coil_area_m2", "physical");
  s.physical.coil_resistance_ohm = need_num(phys, "coil_resistance_ohm", "physical");
  s.physical.coil_inductance_H = need_num(phys, "coil_inductance_H", "physical");
  const json& carriers = need(phys, "carriers", "physical");
  if (!carriers.is_array()) throw ScenarioError("physical.carriers", "expected an array");
  for (std::size_t k = 0; k < carriers.size(); ++k) {
    const std::string path = "physical.carriers[" + std::to_string(k) + "]";
    Scenario::Carrier c;
    std::tie(c.i, c.j) = need_pair(carriers[k], s.n, path);
    c.num = need_int(carriers[k], "num", path);
    c.den = need_int(carriers[k], "den", path);
    c.times_pi = need_bool(carriers[k], "times_pi", path);
    if (c.num <= 0 || c.den <= 0) throw ScenarioError(path, "carrier num/den must be positive");
    s.carriers.push_back(c);
  }

  const json& con = need(j, "constraints", "scenario");
  s.constraints.r_min_m = need_num(con, "r_min_m", "constraints");
  s.constraints.v_max_mps = need_num(con, "v_max_mps", "constraints");
  s.constraints.q_max_VA = need_num(con, "q_max_VA", "constraints");
  s.constraints.eps1 = need_num(con, "eps1", "constraints");
  s.constraints.eps2 = need_num(con, "eps2", "constraints");

  const json& cbf = need(j, "cbf", "scenario");
  s.cbf.a_per_s = need_num(cbf, "a_per_s", "cbf");
  s.cbf.sigma_per_s = need_num(cbf, "sigma_per_s", "cbf");
  s.cbf.rho = need_num(cbf, "rho", "cbf");
  s.cbf.k0_per_s = need_num(cbf, "k0_per_s", "cbf");
  s.cbf.k1_per_s = need_num(cbf, "k1_per_s", "cbf");
  s.cbf.kv_per_s = need_num(cbf, "kv_per_s", "cbf");
  s.cbf.alpha_per_s = need_num(cbf, "alpha_per_s", "cbf");
  s.cbf.gamma_slack = need_num(cbf, "gamma_slack", "cbf");

  const json& mpc = need(j, "mpc", "scenario");
  s.mpc.horizon_s = need_num(mpc, "horizon_s", "mpc");
  s.mpc.step_s = need_num(mpc, "step_s", "mpc");
  s.mpc.w_pos = as_weight(need(mpc, "w_pos", "mpc"), "mpc.w_pos");
  s.mpc.w_vel = as_weight(need(mpc, "w_vel", "mpc"), "mpc.w_vel");
  s.mpc.w_zeta = need_num(mpc, "w_zeta", "mpc");
  s.mpc.flow_fd_delta_s = opt_num(mpc, "flow_fd_delta_s", "mpc", 1e-4);
  const json& desired = need(mpc, "desired_m", "mpc");
  if (!desired.is_array() || desired.size() != static_cast<std::size_t>(pairs.count()))
    throw ScenarioError("mpc.desired_m",
                        "expected one entry per pair (" + std::to_string(pairs.count()) + ")");
  s.mpc.desired_m.assign(pairs.count(), Vec3::Zero());
  {
    std::vector<bool> seen(pairs.count(), false);
    for (std::size_t e = 0; e < desired.size(); ++e) {
      const std::string path = "mpc.desired_m[" + std::to_string(e) + "]";
      const auto [i, jj] = need_pair(desired[e], s.n, path);
      const int k = pairs.at(i, jj);
      if (seen[k]) throw ScenarioError(path, "duplicate pair");
      seen[k] = true;
      s.mpc.desired_m[k] = as_vec3(need(desired[e], "d_m", path), path + ".d_m");
    }
  }

  const json& init = need(j, "initial", "scenario");
  const json& r0 = need(init, "r_m", "initial");
  const json& v0 = need(init, "v_mps", "initial");
  if (!r0.is_array() || r0.size() != static_cast<std::size_t>(s.n))
    throw ScenarioError("initial.r_m", "expected one position per satellite");
  if (!v0.is_array() || v0.size() != static_cast<std::size_t>(s.n))
    throw ScenarioError("initial.v_mps", "expected one velocity per satellite");
  for (int i = 0; i < s.n; ++i) {
    s.r0_m.push_back(as_vec3(r0[i], "initial.r_m[" + std::to_string(i) + "]"));
    s.v0_mps.push_back(as_vec3(v0[i], "initial.v_mps[" + std::to_string(i) + "]"));
  }
  s.nu0 = ForceVector::zero(pairs.count());
  if (init.contains("nu0_A2m4")) {
    const json& nu0 = init["nu0_A2m4"];
    if (!nu0.is_array() || nu0.size() != static_cast<std::size_t>(pairs.count()))
      throw ScenarioError("initial.nu0_A2m4",
                          "expected one entry per pair (" + std::to_string(pairs.count()) + ")");
    std::vector<bool> seen(pairs.count(), false);
    for (std::size_t e = 0; e < nu0.size(); ++e) {
      const std::string path = "initial.nu0_A2m4[" + std::to_string(e) + "]";
      const auto [i, jj] = need_pair(nu0[e], s.n, path);
      const int k = pairs.at(i, jj);
      if (seen[k]) throw ScenarioError(path, "duplicate pair");
      seen[k] = true;
      s.nu0.f[k] = as_vec3(need(nu0[e], "f_A2m4", path), path + ".f_A2m4");
    }
  }

  if (j.contains("integration")) {
    const json& integ = j["integration"];
    s.duration_s = opt_num(integ, "duration_s", "integration", s.duration_s);
    s.step_s = opt_num(integ, "step_s", "integration", s.step_s);
    s.full_step_s = opt_num(integ, "full_step_s", "integration", s.full_step_s);
  }

  try {
    s.resolve_carriers(pairs);
    validate_scenario(s);
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(origin, e.what());
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open scenario file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str(), path);
}

std::string scenario_to_json_text(const Scenario& s) {
  const PairIndex pairs(s.n);
  json j;
  j["name"] = s.name;
  j["satellite_count"] = s.n;

  json carriers = json::array();
  for (const auto& c : s.carriers)
    carriers.push_back({{"i", c.i + 1},
                        {"j", c.j + 1},
                        {"num", c.num},
                        {"den", c.den},
                        {"times_pi", c.times_pi}});
  j["physical"] = {{"mass_kg", s.physical.mass_kg},
                   {"mu0_Tm_per_A", s.physical.mu0_Tm_per_A},
                   {"coil_turns", s.physical.coil_turns},
                   {"coil_area_m2", s.physical.coil_area_m2},
                   {"coil_resistance_ohm", s.physical.coil_resistance_ohm},
                   {"coil_inductance_H", s.physical.coil_inductance_H},
                   {"carriers", carriers}};

  j["constraints"] = {{"r_min_m", s.constraints.r_min_m},
                      {"v_max_mps", s.constraints.v_max_mps},
                      {"q_max_VA", s.constraints.q_max_VA},
                      {"eps1", s.constraints.eps1},
                      {"eps2", s.constraints.eps2}};

  j["cbf"] = {{"a_per_s", s.cbf.a_per_s},       {"sigma_per_s", s.cbf.sigma_per_s},
              {"rho", s.cbf.rho},               {"k0_per_s", s.cbf.k0_per_s},
              {"k1_per_s", s.cbf.k1_per_s},     {"kv_per_s", s.cbf.kv_per_s},
              {"alpha_per_s", s.cbf.alpha_per_s}, {"gamma_slack", s.cbf.gamma_slack}};

  json desired = json::array();
  for (int k = 0; k < pairs.count(); ++k)
    desired.push_back({{"i", pairs.lo(k) + 1},
                       {"j", pairs.hi(k) + 1},
                       {"d_m", vec3_json(s.mpc.desired_m[k])}});
  j["mpc"] = {{"horizon_s", s.mpc.horizon_s},
              {"step_s", s.mpc.step_s},
              {"w_pos", mat3_json(s.mpc.w_pos)},
              {"w_vel", mat3_json(s.mpc.w_vel)},
              {"w_zeta", s.mpc.w_zeta},
              {"flow_fd_delta_s", s.mpc.flow_fd_delta_s},
              {"desired_m", desired}};

  json r0 = json::array(), v0 = json::array(), nu0 = json::array();
  for (int i = 0; i < s.n; ++i) {
    r0.push_back(vec3_json(s.r0_m[i]));
    v0.push_back(vec3_json(s.v0_mps[i]));
  }
  for (int k = 0; k < pairs.count(); ++k)
    nu0.push_back(
        {{"i", pairs.lo(k) + 1}, {"j", pairs.hi(k) + 1}, {"f_A2m4", vec3_json(s.nu0.f[k])}});
  j["initial"] = {{"r_m", r0}, {"v_mps", v0}, {"nu0_A2m4", nu0}};

  j["integration"] = {{"duration_s", s.duration_s},
                      {"step_s", s.step_s},
                      {"full_step_s", s.full_step_s}};
  return j.dump(2) + "\n";
}

}  // namespace emff
