// Command-line front end: closed-loop runs, property-suite validation, and
// the built-in reference scenario.
#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "emff/kernels.hpp"
#include "emff/runlog.hpp"
#include "emff/scenario_io.hpp"
#include "emff/sim.hpp"
#include "emff/validation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;   // validation failure, safe-set exit, domain error
constexpr int kExitBadScenario = 2;  // malformed scenario file

emff::Scenario load_or_builtin(const std::string& path) {
  if (path == "-" || path.empty()) return emff::reference_scenario();
  return emff::load_scenario(path);
}

void print_averaged_summary(const emff::RunSummary& sum) {
  std::printf("steps              %d (%.6g s simulated)\n", sum.steps, sum.duration_s);
  std::printf("min separation     %.9g m\n", sum.min_pair_distance_m);
  std::printf("max relative speed %.9g m/s\n", sum.max_pair_speed_mps);
  std::printf("max power proxy    %.9g VA\n", sum.max_power_proxy_VA);
  std::printf("min h              %.9g\n", sum.min_h);
  std::printf("min raw margin     %.9g\n", sum.min_raw_margin);
  for (std::size_t k = 0; k < sum.final_error_m.size(); ++k)
    std::printf("final offset error [pair %zu]  %.9g m\n", k, sum.final_error_m[k]);
  std::printf("binding-constraint changes: %zu\n", sum.argmin_trace.size());
  if (sum.aborted) std::printf("ABORTED: %s\n", sum.abort_reason.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Electromagnetic formation-flying simulator: frequency-multiplexed dipole "
      "force allocation, predictive formation control, and a barrier-certified "
      "safety filter"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;
  std::string stem = "run";
  int log_every = 1;
  double duration = -1.0;
  bool no_filter = false;

  const auto add_run_flags = [&](CLI::App* cmd, bool needs_file) {
    auto* opt = cmd->add_option("scenario", scenario_path,
                                "Scenario JSON file ('-' for the built-in reference scenario)");
    if (needs_file) opt->required();
    cmd->add_option("--out", out_dir, "Directory for CSV log and JSON metadata sidecar");
    cmd->add_option("--stem", stem, "Output file stem (default 'run')");
    cmd->add_option("--log-every", log_every, "Log every k-th step")->check(CLI::PositiveNumber);
    cmd->add_option("--duration", duration, "Override simulation duration [s]");
    cmd->add_flag("--no-filter", no_filter,
                  "Bypass the safety filter and apply the raw planner demand");
  };

  auto* run_avg = app.add_subcommand("run-averaged", "Closed-loop run of the averaged model");
  add_run_flags(run_avg, true);

  auto* run_full_cmd =
      app.add_subcommand("run-full", "Oscillating-moment run at the fine integration step");
  add_run_flags(run_full_cmd, true);
  double window = -1.0;
  run_full_cmd->add_option("--window", window, "Run length [s]; multiple of the common period")
      ->required();

  auto* validate_cmd =
      app.add_subcommand("validate", "Run every property suite and print pass/fail with margins");
  std::uint64_t seed = 20260822ULL;
  bool skip_long = false;
  validate_cmd->add_option("--seed", seed, "Seed for the randomized suites");
  validate_cmd->add_flag("--skip-long", skip_long,
                         "Skip the multi-second reference-scenario reproduction suite");

  auto* emit_cmd = app.add_subcommand(
      "scenario-paper", "Write the built-in reference scenario as JSON (stdout or --out file)");
  std::string emit_path;
  emit_cmd->add_option("--out", emit_path, "Destination file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (emit_cmd->parsed()) {
      const std::string text = emff::scenario_to_json_text(emff::reference_scenario());
      if (emit_path.empty()) {
        std::fputs(text.c_str(), stdout);
      } else {
        emff::write_text_file(emit_path, text);
        std::printf("wrote %s\n", emit_path.c_str());
      }
      return kExitOk;
    }

    if (validate_cmd->parsed()) {
      const auto results = emff::validation::run_all(seed, !skip_long);
      bool all_passed = true;
      for (const auto& r : results) {
        std::printf("[%s] %s (%.2f s)\n    %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.detail.c_str());
        all_passed = all_passed && r.passed;
      }
      std::printf("%s (%zu suites, seed %llu, kernels: %s)\n",
                  all_passed ? "ALL SUITES PASSED" : "SUITE FAILURES PRESENT", results.size(),
                  static_cast<unsigned long long>(seed), emff::kernels::active_kernels().name);
      return all_passed ? kExitOk : kExitRunFailure;
    }

    emff::RunOptions options;
    if (!out_dir.empty()) options.out_dir = out_dir;
    options.stem = stem;
    options.log_every = log_every;
    options.filter_enabled = !no_filter;
    if (duration > 0.0) options.duration_s = duration;

    if (run_avg->parsed()) {
      const emff::Scenario scenario = load_or_builtin(scenario_path);
      const emff::RunSummary sum = emff::run_averaged(scenario, options);
      print_averaged_summary(sum);
      return sum.aborted ? kExitRunFailure : kExitOk;
    }

    if (run_full_cmd->parsed()) {
      const emff::Scenario scenario = load_or_builtin(scenario_path);
      const emff::FullRunSummary sum = emff::run_full(scenario, window, options);
      std::printf("periods            %d (%.6g s simulated)\n", sum.periods, sum.duration_s);
      std::printf("max accel rel err  %.9g vs averaged model\n", sum.max_accel_rel_error);
      if (sum.aborted) std::printf("ABORTED: %s\n", sum.abort_reason.c_str());
      return sum.aborted ? kExitRunFailure : kExitOk;
    }
  } catch (const emff::ScenarioError& e) {
    std::fprintf(stderr, "scenario error: %s\n", e.what());
    return kExitBadScenario;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "domain error: %s\n", e.what());
    return kExitRunFailure;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "scenario error: %s\n", e.what());
    return kExitBadScenario;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRunFailure;
  }
  return kExitOk;
}
