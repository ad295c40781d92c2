#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparf::verify {

struct AccuracyOptions {
  std::uint64_t seed = 1;
  std::size_t head_dim = 128;
  std::size_t seq_len = 1024;
  std::size_t heads = 64;
  std::vector<double> ratios{1.0, 0.5, 0.25, 0.125};
  std::size_t embedding_group = 8;  // page-aligned run
  std::size_t token_group = 16;
  int threads = 0;
};

struct AccuracyRow {
  double ratio = 1.0;
  std::size_t r = 0;
  std::size_t k = 0;
  double mean_rel_l2 = 0;            // SparF vs dense
  double max_rel_l2 = 0;
  double max_sparq_delta = 0;        // SparF(m=n=1) vs SparQ, max abs
  double max_grouped_delta = 0;      // SparF(page groups) vs SparF(m=n=1), max abs
};

/// Throws ConfigError unless every ratio is one of 1, 1/2, 1/4, 1/8, 1/16.
std::vector<AccuracyRow> run_accuracy(const AccuracyOptions& options);

std::string accuracy_csv(const std::vector<AccuracyRow>& rows);

}  // namespace sparf::verify
