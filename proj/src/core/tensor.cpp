#include "sparf/core/tensor.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "sparf/errors.hpp"

namespace sparf::core {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ConfigError("matrix data size " + std::to_string(data_.size()) + " != " +
                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void HeadConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("HeadConfig: " + msg); };
  if (head_dim == 0) fail("d_h must be > 0");
  if (seq_len == 0) fail("S must be > 0");
  if (kept_embeddings < 1 || kept_embeddings > head_dim) fail("r must lie in [1, d_h]");
  if (kept_tokens < 1 || kept_tokens > seq_len) fail("k must lie in [1, S]");
  if (embedding_group < 1) fail("m must be >= 1");
  if (token_group < 1) fail("n must be >= 1");
  if (element_bytes < 1) fail("element_bytes must be >= 1");
  if (stripe_tokens() < 1) fail("embedding group too large for the page size");
}

std::size_t HeadConfig::stripe_tokens() const {
  return page_bytes() / (embedding_group * element_bytes);
}

HeadTensors HeadTensors::from_cache(std::vector<double> q, Matrix keys, Matrix values) {
  HeadTensors t;
  t.q = std::move(q);
  t.keys = std::move(keys);
  t.values = std::move(values);
  t.value_mean.assign(t.values.cols(), 0.0);
  for (std::size_t i = 0; i < t.values.rows(); ++i)
    for (std::size_t c = 0; c < t.values.cols(); ++c) t.value_mean[c] += t.values(i, c);
  if (t.values.rows() > 0)
    for (double& v : t.value_mean) v /= static_cast<double>(t.values.rows());
  t.token_count = t.values.rows();
  t.validate();
  return t;
}

void HeadTensors::validate() const {
  const std::size_t d = q.size();
  if (d == 0) throw ConfigError("HeadTensors: empty query");
  if (keys.cols() != d || values.cols() != d)
    throw ConfigError("HeadTensors: K/V width does not match d_h=" + std::to_string(d));
  if (keys.rows() != values.rows())
    throw ConfigError("HeadTensors: K has " + std::to_string(keys.rows()) + " rows, V has " +
                      std::to_string(values.rows()));
  if (keys.rows() == 0) throw ConfigError("HeadTensors: empty sequence");
  if (value_mean.size() != d) throw ConfigError("HeadTensors: value mean width != d_h");
}

HeadTensors random_head(std::size_t head_dim, std::size_t seq_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(head_dim);
  for (double& v : q) v = normal(rng);
  Matrix k(seq_len, head_dim), v(seq_len, head_dim);
  for (double& x : k.data()) x = normal(rng);
  for (double& x : v.data()) x = normal(rng);
  return HeadTensors::from_cache(std::move(q), std::move(k), std::move(v));
}

bool SelectionMask::contains(std::size_t index) const {
  return std::binary_search(selected.begin(), selected.end(), index);
}

}  // namespace sparf::core
