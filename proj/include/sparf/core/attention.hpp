#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "sparf/core/tensor.hpp"

namespace sparf::core {

/// softmax(q . K^T / sqrt(d_h)) . V
std::vector<double> dense_attention(const HeadTensors& t);

enum class TopKKey : std::uint8_t { kMagnitude, kRaw };

/// Indices of the `count` largest keys, returned in increasing index order.
/// Equal keys prefer the lower index.
SelectionMask argtopk(std::span<const double> values, std::size_t count, TopKKey key,
                      Axis axis);

/// Page groups touched by a selection: every g with a selected index in
/// [g*group, (g+1)*group), ascending.
std::vector<std::size_t> group_expand(const SelectionMask& mask, std::size_t group);

/// Page-granular payload after the first loading step. Each loaded group
/// carries up to `group_size` lines (rows of K/V, or columns of K) of
/// `line_length` values; the last group may be short.
struct LoadedGroups {
  std::size_t group_size = 1;
  std::size_t line_length = 0;
  std::size_t extent = 0;
  std::map<std::size_t, Matrix> groups;
};

/// First step: whole groups of rows of `source`.
LoadedGroups load_row_groups(const Matrix& source, std::span<const std::size_t> group_ids,
                             std::size_t group_size);
/// First step on the embedding axis: whole groups of columns of `source`,
/// stored as lines (so a loaded group is group_size x S).
LoadedGroups load_column_groups(const Matrix& source, std::span<const std::size_t> group_ids,
                                std::size_t group_size);

/// Second step: keep exactly the selected lines, packed in index order.
/// Throws InvariantError if a selected index lives in a group that was not loaded.
Matrix filter_groups(const LoadedGroups& loaded, const SelectionMask& mask);

/// Scores from the top-r query components, tempered by
/// sqrt(d_h * |q_[i]|_1 / |q|_1). Throws DegenerateQueryError when |q|_1 == 0.
std::vector<double> approx_scores(const HeadTensors& t, const SelectionMask& embeddings,
                                  double temperature_scale = 1.0);

/// Same computation on already gathered columns (r x S, one line per embedding).
std::vector<double> approx_scores_from_columns(std::span<const double> q,
                                               const SelectionMask& embeddings,
                                               const Matrix& columns,
                                               double temperature_scale = 1.0);

/// Score mass covered by the kept tokens.
double alpha_mass(std::span<const double> scores, const SelectionMask& tokens);

/// Knobs that are not part of the algorithm itself.
struct SparfOptions {
  /// Multiplies the approximate-score temperature. 1.0 is the algorithm; other values
  /// exist only so verification can show a perturbed engine being caught.
  double temperature_scale = 1.0;
  /// Optional ragged-batch hook: nonzero entries mark padded tokens, which are
  /// never kept. Empty means an exact-length sequence.
  std::vector<std::uint8_t> padding;
};

/// Flash-aware sparse attention with dual-step (page, then element) loading.
AttentionResult sparf_attention(const HeadTensors& t, const HeadConfig& cfg,
                                const SparfOptions& options = {});

/// Flash-unaware reference: same selection and arithmetic with direct
/// element gathers and no page grouping.
AttentionResult sparq_attention(const HeadTensors& t, std::size_t kept_embeddings,
                                std::size_t kept_tokens, const SparfOptions& options = {});

/// Folds one more value row into the running mean.
void update_value_mean(std::vector<double>& value_mean, std::size_t& token_count,
                       std::span<const double> value_row);

/// Page accounting for the two load phases of a selection.
AccessTrace column_access_trace(const HeadConfig& cfg, const SelectionMask& embeddings);
AccessTrace row_access_trace(const HeadConfig& cfg, const SelectionMask& tokens);

}  // namespace sparf::core
