#pragma once

// Straight-line scalar transcription of the flash-aware sparse attention
// steps, written without any of the library's kernels or selection helpers.
// Used only by tests and `verify` as an independent reference.

#include <cstddef>
#include <vector>

#include "sparf/core/tensor.hpp"

namespace sparf::oracle {

struct ScalarResult {
  std::vector<double> out;
  double alpha = 0.0;
  std::vector<double> approx_scores;
  std::vector<std::size_t> embeddings;
  std::vector<std::size_t> tokens;
};

/// Runs the whole selection and attention for one head: page-group loads are modeled as
/// copying every touched group into a scratch buffer and then discarding
/// unselected entries.
ScalarResult scalar_sparf(const core::HeadTensors& t, std::size_t kept_embeddings,
                          std::size_t kept_tokens, std::size_t embedding_group,
                          std::size_t token_group);

/// softmax(q K^T / sqrt(d)) V with plain loops.
std::vector<double> scalar_dense(const core::HeadTensors& t);

/// Direct gather of the selected rows of a row-major S x d matrix, the
/// reference for the dual-step load.
core::Matrix direct_gather_rows(const core::Matrix& m, const std::vector<std::size_t>& rows);

}  // namespace sparf::oracle
