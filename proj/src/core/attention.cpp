#include "sparf/core/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sparf/core/kernels.hpp"
#include "sparf/errors.hpp"

namespace sparf::core {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

void check_shapes(const HeadTensors& t, const HeadConfig& cfg) {
  cfg.validate();
  t.validate();
  if (cfg.head_dim != t.head_dim() || cfg.seq_len != t.seq_len()) {
    throw ConfigError("HeadConfig (d_h=" + std::to_string(cfg.head_dim) +
                      ", S=" + std::to_string(cfg.seq_len) + ") does not match tensors (d_h=" +
                      std::to_string(t.head_dim()) + ", S=" + std::to_string(t.seq_len()) + ")");
  }
}

SelectionMask first_embeddings(std::size_t count, std::size_t extent) {
  SelectionMask m;
  m.axis = Axis::kEmbedding;
  m.extent = extent;
  m.selected.resize(count);
  std::iota(m.selected.begin(), m.selected.end(), std::size_t{0});
  return m;
}

// Token ranking key: the approximate scores, with padded tokens pushed below every
// real token.
SelectionMask select_tokens(std::span<const double> scores, std::size_t count,
                            const std::vector<std::uint8_t>& padding) {
  if (padding.empty()) return argtopk(scores, count, TopKKey::kRaw, Axis::kToken);
  if (padding.size() != scores.size())
    throw ConfigError("padding mask length " + std::to_string(padding.size()) +
                      " != S=" + std::to_string(scores.size()));
  const auto valid = static_cast<std::size_t>(
      std::count(padding.begin(), padding.end(), std::uint8_t{0}));
  if (count > valid)
    throw ConfigError("k=" + std::to_string(count) + " exceeds the " + std::to_string(valid) +
                      " unpadded tokens");
  std::vector<double> keyed(scores.begin(), scores.end());
  for (std::size_t i = 0; i < keyed.size(); ++i)
    if (padding[i] != 0) keyed[i] = -std::numeric_limits<double>::infinity();
  return argtopk(keyed, count, TopKKey::kRaw, Axis::kToken);
}

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto from = src.row(rows[i]);
    std::copy(from.begin(), from.end(), out.row(i).begin());
  }
  return out;
}

Matrix gather_columns(const Matrix& src, const std::vector<std::size_t>& cols) {
  Matrix out(cols.size(), src.rows());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < src.rows(); ++i) out(j, i) = src(i, cols[j]);
  return out;
}

std::vector<double> uniform_scores(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

// Score mass, exact softmax and mean blending on the gathered rows.
void finish(const HeadTensors& t, const Matrix& key_rows, const Matrix& value_rows,
            AttentionResult& res) {
  res.alpha = alpha_mass(res.approx_scores, res.tokens);
  std::vector<double> s(key_rows.rows());
  kernels::row_logits(t.q, key_rows, 1.0 / std::sqrt(static_cast<double>(t.head_dim())), s);
  kernels::softmax_inplace(s);
  std::vector<double> attended(t.head_dim());
  kernels::weighted_row_sum(s, value_rows, attended);
  res.out.resize(t.head_dim());
  for (std::size_t c = 0; c < t.head_dim(); ++c)
    res.out[c] = res.alpha * attended[c] + (1.0 - res.alpha) * t.value_mean[c];
}

}  // namespace

std::vector<double> dense_attention(const HeadTensors& t) {
  t.validate();
  std::vector<double> p(t.seq_len());
  kernels::row_logits(t.q, t.keys, 1.0 / std::sqrt(static_cast<double>(t.head_dim())), p);
  kernels::softmax_inplace(p);
  std::vector<double> out(t.head_dim());
  kernels::weighted_row_sum(p, t.values, out);
  return out;
}

SelectionMask argtopk(std::span<const double> values, std::size_t count, TopKKey key,
                      Axis axis) {
  if (count < 1 || count > values.size())
    throw ConfigError("argtopk: count " + std::to_string(count) + " outside [1, " +
                      std::to_string(values.size()) + "]");
  auto key_of = [&](std::size_t i) {
    return key == TopKKey::kMagnitude ? std::abs(values[i]) : values[i];
  };
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Total order: larger key first, then lower index.
  auto better = [&](std::size_t a, std::size_t b) {
    const double ka = key_of(a), kb = key_of(b);
    if (ka != kb) return ka > kb;
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                    order.end(), better);
  order.resize(count);
  std::sort(order.begin(), order.end());
  SelectionMask m;
  m.axis = axis;
  m.extent = values.size();
  m.selected = std::move(order);
  return m;
}

std::vector<std::size_t> group_expand(const SelectionMask& mask, std::size_t group) {
  if (group < 1) throw ConfigError("group_expand: group size must be >= 1");
  std::vector<std::size_t> groups;
  for (std::size_t idx : mask.selected) {
    const std::size_t g = idx / group;
    if (groups.empty() || groups.back() != g) groups.push_back(g);
  }
  return groups;
}

LoadedGroups load_row_groups(const Matrix& source, std::span<const std::size_t> group_ids,
                             std::size_t group_size) {
  LoadedGroups out;
  out.group_size = group_size;
  out.line_length = source.cols();
  out.extent = source.rows();
  for (std::size_t g : group_ids) {
    const std::size_t begin = g * group_size;
    if (begin >= source.rows()) throw InvariantError("row group beyond the sequence");
    const std::size_t end = std::min(begin + group_size, source.rows());
    Matrix tile(end - begin, source.cols());
    for (std::size_t i = begin; i < end; ++i) {
      auto from = source.row(i);
      std::copy(from.begin(), from.end(), tile.row(i - begin).begin());
    }
    out.groups.emplace(g, std::move(tile));
  }
  return out;
}

LoadedGroups load_column_groups(const Matrix& source, std::span<const std::size_t> group_ids,
                                std::size_t group_size) {
  LoadedGroups out;
  out.group_size = group_size;
  out.line_length = source.rows();
  out.extent = source.cols();
  for (std::size_t g : group_ids) {
    const std::size_t begin = g * group_size;
    if (begin >= source.cols()) throw InvariantError("column group beyond the head dimension");
    const std::size_t end = std::min(begin + group_size, source.cols());
    Matrix tile(end - begin, source.rows());
    for (std::size_t c = begin; c < end; ++c)
      for (std::size_t i = 0; i < source.rows(); ++i) tile(c - begin, i) = source(i, c);
    out.groups.emplace(g, std::move(tile));
  }
  return out;
}

Matrix filter_groups(const LoadedGroups& loaded, const SelectionMask& mask) {
  Matrix out(mask.size(), loaded.line_length);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    const std::size_t idx = mask.selected[j];
    const std::size_t g = idx / loaded.group_size;
    auto it = loaded.groups.find(g);
    if (it == loaded.groups.end())
      throw InvariantError("filter_groups: index " + std::to_string(idx) + " needs group " +
                           std::to_string(g) + ", which was not loaded");
    auto from = it->second.row(idx - g * loaded.group_size);
    std::copy(from.begin(), from.end(), out.row(j).begin());
  }
  return out;
}

std::vector<double> approx_scores_from_columns(std::span<const double> q,
                                               const SelectionMask& embeddings,
                                               const Matrix& columns,
                                               double temperature_scale) {
  const double full = l1_norm(q);
  if (full == 0.0) throw DegenerateQueryError("approx_scores: |q|_1 == 0");
  std::vector<double> q_kept(embeddings.size());
  for (std::size_t j = 0; j < embeddings.size(); ++j) q_kept[j] = q[embeddings.selected[j]];
  const double kept = l1_norm(q_kept);
  std::vector<double> scores(columns.cols());
  if (kept == 0.0) {
    // Every kept component is zero: equal logits.
    return uniform_scores(columns.cols());
  }
  const double temperature =
      std::sqrt(static_cast<double>(q.size()) * kept / full) * temperature_scale;
  kernels::weighted_row_sum(q_kept, columns, scores);
  for (double& s : scores) s /= temperature;
  kernels::softmax_inplace(scores);
  return scores;
}

std::vector<double> approx_scores(const HeadTensors& t, const SelectionMask& embeddings,
                                  double temperature_scale) {
  t.validate();
  if (embeddings.axis != Axis::kEmbedding)
    throw ConfigError("approx_scores: mask must be on the embedding axis");
  return approx_scores_from_columns(t.q, embeddings, gather_columns(t.keys, embeddings.selected),
                                    temperature_scale);
}

double alpha_mass(std::span<const double> scores, const SelectionMask& tokens) {
  double a = 0.0;
  for (std::size_t j : tokens.selected) a += scores[j];
  return std::clamp(a, 0.0, 1.0);
}

AccessTrace column_access_trace(const HeadConfig& cfg, const SelectionMask& embeddings) {
  AccessTrace tr;
  tr.phase = LoadPhase::kEmbeddingColumns;
  tr.page_size = cfg.page_bytes();
  const std::size_t stripes = ceil_div(cfg.seq_len, cfg.stripe_tokens());
  tr.pages_requested = group_expand(embeddings, cfg.embedding_group).size() * stripes;
  tr.bytes_over_channel = tr.pages_requested * tr.page_size;
  tr.bytes_after_filter = embeddings.size() * cfg.seq_len * cfg.element_bytes;
  tr.dense_bytes = ceil_div(cfg.head_dim, cfg.embedding_group) * stripes * tr.page_size;
  return tr;
}

AccessTrace row_access_trace(const HeadConfig& cfg, const SelectionMask& tokens) {
  AccessTrace tr;
  tr.phase = LoadPhase::kTokenRows;
  tr.page_size = cfg.page_bytes();
  // K and V pages of every touched group.
  tr.pages_requested = 2 * group_expand(tokens, cfg.token_group).size();
  tr.bytes_over_channel = tr.pages_requested * tr.page_size;
  tr.bytes_after_filter = 2 * tokens.size() * cfg.head_dim * cfg.element_bytes;
  tr.dense_bytes = 2 * ceil_div(cfg.seq_len, cfg.token_group) * tr.page_size;
  return tr;
}

AttentionResult sparf_attention(const HeadTensors& t, const HeadConfig& cfg,
                                const SparfOptions& options) {
  check_shapes(t, cfg);
  AttentionResult res;

  // Embedding selection, page-group column load, filter, scores.
  if (l1_norm(t.q) == 0.0) {
    res.degenerate_query = true;
    res.embeddings = first_embeddings(cfg.kept_embeddings, cfg.head_dim);
  } else {
    res.embeddings = argtopk(t.q, cfg.kept_embeddings, TopKKey::kMagnitude, Axis::kEmbedding);
  }
  res.embeddings.group_size = cfg.embedding_group;
  const auto column_groups = group_expand(res.embeddings, cfg.embedding_group);
  const Matrix columns =
      filter_groups(load_column_groups(t.keys, column_groups, cfg.embedding_group), res.embeddings);
  res.approx_scores = res.degenerate_query
                          ? uniform_scores(cfg.seq_len)
                          : approx_scores_from_columns(t.q, res.embeddings, columns,
                                                       options.temperature_scale);

  // Token selection.
  res.tokens = select_tokens(res.approx_scores, cfg.kept_tokens, options.padding);
  res.tokens.group_size = cfg.token_group;

  // Page-group row load of K and V, then filter.
  const auto row_groups = group_expand(res.tokens, cfg.token_group);
  const Matrix key_rows =
      filter_groups(load_row_groups(t.keys, row_groups, cfg.token_group), res.tokens);
  const Matrix value_rows =
      filter_groups(load_row_groups(t.values, row_groups, cfg.token_group), res.tokens);

  finish(t, key_rows, value_rows, res);
  res.column_trace = column_access_trace(cfg, res.embeddings);
  res.row_trace = row_access_trace(cfg, res.tokens);
  return res;
}

AttentionResult sparq_attention(const HeadTensors& t, std::size_t kept_embeddings,
                                std::size_t kept_tokens, const SparfOptions& options) {
  HeadConfig cfg;
  cfg.head_dim = t.head_dim();
  cfg.seq_len = t.seq_len();
  cfg.kept_embeddings = kept_embeddings;
  cfg.kept_tokens = kept_tokens;
  check_shapes(t, cfg);

  AttentionResult res;
  if (l1_norm(t.q) == 0.0) {
    res.degenerate_query = true;
    res.embeddings = first_embeddings(kept_embeddings, cfg.head_dim);
    res.approx_scores = uniform_scores(cfg.seq_len);
  } else {
    res.embeddings = argtopk(t.q, kept_embeddings, TopKKey::kMagnitude, Axis::kEmbedding);
    res.approx_scores =
        approx_scores_from_columns(t.q, res.embeddings, gather_columns(t.keys, res.embeddings.selected),
                                   options.temperature_scale);
  }
  res.tokens = select_tokens(res.approx_scores, kept_tokens, options.padding);
  finish(t, gather_rows(t.keys, res.tokens.selected), gather_rows(t.values, res.tokens.selected),
         res);
  res.column_trace = column_access_trace(cfg, res.embeddings);
  res.row_trace = row_access_trace(cfg, res.tokens);
  return res;
}

void update_value_mean(std::vector<double>& value_mean, std::size_t& token_count,
                       std::span<const double> value_row) {
  if (value_mean.empty()) value_mean.assign(value_row.size(), 0.0);
  if (value_mean.size() != value_row.size())
    throw ConfigError("update_value_mean: row width " + std::to_string(value_row.size()) +
                      " != mean width " + std::to_string(value_mean.size()));
  const double n = static_cast<double>(token_count);
  for (std::size_t c = 0; c < value_mean.size(); ++c)
    value_mean[c] = (value_mean[c] * n + value_row[c]) / (n + 1.0);
  ++token_count;
}

}  // namespace sparf::core
