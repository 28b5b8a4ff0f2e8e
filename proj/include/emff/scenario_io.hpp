#pragma once

#include <stdexcept>
#include <string>

#include "emff/sim.hpp"

namespace emff {

// Raised for unreadable, unparsable, or semantically invalid scenario files.
// `where` carries a line/column (parse errors) or a field path (semantic
// errors) for the CLI diagnostic.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// Parse, resolve carriers, and validate (including the initial safe-set
// membership gate).  Throws ScenarioError.
Scenario load_scenario(const std::string& path);
Scenario scenario_from_json_text(const std::string& text, const std::string& origin = "scenario");

// Serialized form that load_scenario reads back to an identical scenario
// (exact rational carriers; doubles round-trip via shortest representation).
std::string scenario_to_json_text(const Scenario& scenario);

}  // namespace emff
