#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparf::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t heads = 120;  // random heads per algorithm check
  /// Mutation hook: scales the approximate-score temperature of the engine under test
  /// (never of the reference). Anything but 1.0 must make verification fail.
  double temperature_scale = 1.0;
  /// Optional JSON test-vector file checked in addition.
  std::string vectors_path;
  int threads = 0;
};

/// Runs every module invariant suite; each entry is one named check.
std::vector<CheckResult> run_verify(const VerifyOptions& options);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace sparf::verify
