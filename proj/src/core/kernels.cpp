#include "sparf/core/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sparf::core::kernels {

namespace {

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) acc += a[c] * b[c];
  return acc;
}

}  // namespace

void row_logits_serial(std::span<const double> q, const Matrix& rows, double scale,
                       std::span<double> out) {
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = dot(q.data(), rows.row(i).data(), d) * scale;
  }
}

void row_logits_parallel(std::span<const double> q, const Matrix& rows, double scale,
                         std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(rows.rows());
  const std::size_t d = rows.cols();
  const double* qp = q.data();
  double* op = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    op[i] = dot(qp, rows.row(static_cast<std::size_t>(i)).data(), d) * scale;
  }
}

void weighted_row_sum_serial(std::span<const double> weights, const Matrix& rows,
                             std::span<double> out) {
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = rows.row(i).data();
    for (std::size_t c = 0; c < d; ++c) out[c] += weights[i] * r[c];
  }
}

void weighted_row_sum_parallel(std::span<const double> weights, const Matrix& rows,
                               std::span<double> out) {
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  const double* w = weights.data();
  double* op = out.data();
  // Each thread owns a contiguous column slice and walks the rows in order.
#pragma omp parallel
  {
    const auto team = static_cast<std::size_t>(omp_get_num_threads());
    const auto me = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t begin = d * me / team, end = d * (me + 1) / team;
    for (std::size_t c = begin; c < end; ++c) op[c] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = rows.row(i).data();
      for (std::size_t c = begin; c < end; ++c) op[c] += w[i] * r[c];
    }
  }
}

void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : x) peak = std::max(peak, v);
  double total = 0.0;
  for (double& v : x) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : x) v /= total;
}

void row_logits(std::span<const double> q, const Matrix& rows, double scale,
                std::span<double> out) {
  if (rows.rows() * rows.cols() >= kParallelThreshold) {
    row_logits_parallel(q, rows, scale, out);
  } else {
    row_logits_serial(q, rows, scale, out);
  }
}

void weighted_row_sum(std::span<const double> weights, const Matrix& rows,
                      std::span<double> out) {
  if (rows.rows() * rows.cols() >= kParallelThreshold) {
    weighted_row_sum_parallel(weights, rows, out);
  } else {
    weighted_row_sum_serial(weights, rows, out);
  }
}

}  // namespace sparf::core::kernels
