#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sparf::core {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Sizes driving one SparF call on one head.
///
/// `embedding_group` is the number of hidden embeddings packed per
/// embedding-indexed page; `token_group` the number of tokens per
/// token-indexed page. Both only affect which pages get loaded, never the
/// numerical result.
struct HeadConfig {
  std::size_t head_dim = 0;         // d_h
  std::size_t seq_len = 0;          // S
  std::size_t kept_embeddings = 0;  // r
  std::size_t kept_tokens = 0;      // k
  std::size_t embedding_group = 1;  // m
  std::size_t token_group = 1;      // n
  std::size_t element_bytes = 2;    // storage width for byte accounting

  /// Throws ConfigError naming the violated bound.
  void validate() const;

  /// Bytes of one flash page implied by the token grouping.
  std::size_t page_bytes() const { return token_group * head_dim * element_bytes; }
  /// Tokens covered by one embedding-indexed page.
  std::size_t stripe_tokens() const;
};

/// Operands of one attention call: query, K/V caches and the running value mean.
struct HeadTensors {
  std::vector<double> q;
  Matrix keys;    // S x d_h
  Matrix values;  // S x d_h
  std::vector<double> value_mean;
  std::size_t token_count = 0;

  std::size_t head_dim() const noexcept { return q.size(); }
  std::size_t seq_len() const noexcept { return keys.rows(); }

  /// Builds tensors with value_mean set to the column means of `values`.
  static HeadTensors from_cache(std::vector<double> q, Matrix keys, Matrix values);

  /// Throws ConfigError on inconsistent shapes.
  void validate() const;
};

/// Standard-normal q/K/V from a seeded generator (value mean derived).
HeadTensors random_head(std::size_t head_dim, std::size_t seq_len, std::uint64_t seed);

enum class Axis : std::uint8_t { kEmbedding, kToken };

/// Ordered, strictly increasing set of kept indices along one axis.
struct SelectionMask {
  Axis axis = Axis::kToken;
  std::vector<std::size_t> selected;
  std::size_t extent = 0;      // axis length (d_h or S)
  std::size_t group_size = 1;  // grouping used for page alignment

  std::size_t size() const noexcept { return selected.size(); }
  bool contains(std::size_t index) const;
};

enum class LoadPhase : std::uint8_t {
  kEmbeddingColumns,  // first load: embedding-indexed K pages
  kTokenRows,         // second load: token-indexed K and V pages
};

/// Bytes and pages one load phase would move over the flash channels.
struct AccessTrace {
  LoadPhase phase = LoadPhase::kTokenRows;
  std::size_t page_size = 0;
  std::size_t pages_requested = 0;
  std::size_t bytes_over_channel = 0;
  std::size_t bytes_after_filter = 0;
  std::size_t dense_bytes = 0;

  friend bool operator==(const AccessTrace&, const AccessTrace&) = default;
};

struct AttentionResult {
  std::vector<double> out;
  double alpha = 1.0;
  std::vector<double> approx_scores;
  SelectionMask embeddings;
  SelectionMask tokens;
  AccessTrace column_trace;  // K column load
  AccessTrace row_trace;     // K/V row load
  bool degenerate_query = false;
};

}  // namespace sparf::core
