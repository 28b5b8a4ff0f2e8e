#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emff::validation {

// One self-checking property suite: `passed` plus a human-readable margin
// report.  Suites are deterministic given the seed.
struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Numerically time-averaged force of frequency-multiplexed sinusoidal moments
// vs. half the amplitude force law; cross-frequency averages vanish.
SuiteResult averaging_suite(std::uint64_t seed);

// Closed-form amplitude allocation reproduces the requested average force,
// including the aligned/orthogonal cones and zero demand.
SuiteResult allocation_roundtrip_suite(std::uint64_t seed);

// Allocated amplitude magnitudes: equal norms off the orthogonal cone,
// the 2:1 squared-norm split on it.
SuiteResult magnitude_relation_suite(std::uint64_t seed);

// Smooth apparent-power bound strictly dominates the allocated amplitude
// norms: psi > |c1|^2 >= |c2|^2.
SuiteResult power_bound_suite(std::uint64_t seed);

// Analytic barrier-gradient Lie derivatives vs. high-order finite differences
// on random three-satellite cascade states.
SuiteResult gradient_suite(std::uint64_t seed);

// Closed-form safety filter vs. an independent half-space projection oracle;
// inactive constraint passes mu_d through bitwise.
SuiteResult filter_suite(std::uint64_t seed);

// Built-in reference scenario: constraint margins, final formation errors,
// and the expected binding-constraint sequence.  Takes a few seconds.
SuiteResult reference_run_suite();

// One common period of the full-fidelity oscillating-moment simulation vs.
// the averaged model's acceleration.
SuiteResult full_fidelity_suite();

// Momentum conservation over 10^3 steps and observed RK4 convergence order.
SuiteResult conservation_order_suite(std::uint64_t seed);

// Every suite above, in acceptance-criteria order.  The reference run is the
// slowest; `include_reference_run` lets callers skip it.
std::vector<SuiteResult> run_all(std::uint64_t seed, bool include_reference_run);

}  // namespace emff::validation
