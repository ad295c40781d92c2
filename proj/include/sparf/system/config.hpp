#pragma once

// Scenario files.
//
//   {
//     "id": "b64-dense",                      optional
//     "model": "opt-13b" | { ...ModelSpec fields },
//     "hardware": { ...HardwareSpec overrides },
//     "workload": { "batch": 64, "s_in": 1024, "s_out": 1024 },
//     "system": "instinfer" | "host-offload" | "ssd-offload",
//     "sparsity": { "mode": "dense" | "sparf", "ratio": 0.125,
//                   "first_step_retention": 0.5 },
//     "flash": { geometry and timing overrides },   optional
//     "engine": { EngineConfig overrides },          optional
//     "seed": 7
//   }
//
// A sweep file is { "base": {...}, "scenarios": [ patch, ... ] }; each patch
// is merged into the base (RFC 7386) before parsing.

#include <string>
#include <vector>

#include <json.hpp>

#include "sparf/system/scenario.hpp"

namespace sparf::system {

/// Throws ConfigError naming the missing or malformed field.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

/// Accepts a single scenario, a sweep file, or an array of scenarios.
std::vector<Scenario> scenarios_from_json(const nlohmann::json& j);

/// Reads and parses a file; ConfigError mentions the path.
nlohmann::json read_json_file(const std::string& path);

}  // namespace sparf::system
