#pragma once

#include <string>
#include <vector>

#include "sparf/system/scenario.hpp"

namespace sparf::system {

inline constexpr const char* kCsvSchemaLine = "# sparf-sim results schema v1";

struct SweepRow {
  Scenario scenario;
  ScenarioReport report;
};

/// Evaluates scenarios concurrently (`threads` = 0 uses the OpenMP default).
/// Rows keep input order. The first failing scenario, by input order, is
/// rethrown with its id prepended; the exception type is preserved.
std::vector<SweepRow> run_sweep(const std::vector<Scenario>& scenarios, int threads = 0);

/// Schema comment, header, one line per row; numbers as %.9g.
std::string results_csv(const std::vector<SweepRow>& rows);
std::string results_csv_header();

/// "config_id,stage,us,bytes" for each row's last-step engine breakdown.
std::string stages_csv(const std::vector<SweepRow>& rows);

/// Names accepted by preset_scenarios.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name. `seed` is stamped on every scenario.
std::vector<Scenario> preset_scenarios(const std::string& name, std::uint64_t seed);

}  // namespace sparf::system
