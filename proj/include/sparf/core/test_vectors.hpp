#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparf/core/tensor.hpp"

namespace sparf::core {

/// One serialized check: {name, op, config, tensors (seed or explicit), expected, tolerance}.
///
/// `op` is one of "dense", "sparf", "sparq", "approx_scores". For
/// "approx_scores" the expected vector is the score vector; otherwise it is
/// the attention output.
struct TestVector {
  std::string name;
  std::string op;
  HeadConfig config;
  std::optional<std::uint64_t> seed;
  std::optional<HeadTensors> tensors;
  std::vector<double> expected;
  double tolerance = 1e-9;

  /// Explicit tensors, or random_head(config.head_dim, config.seq_len, seed).
  HeadTensors materialize() const;
  /// Runs `op` on the materialized tensors.
  std::vector<double> evaluate() const;
};

std::vector<TestVector> parse_test_vectors(std::string_view json_text);
std::string dump_test_vectors(const std::vector<TestVector>& vectors);

}  // namespace sparf::core
