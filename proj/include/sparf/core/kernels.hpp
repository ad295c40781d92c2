#pragma once

// Inner loops of the attention path. Each kernel has a serial reference and
// an OpenMP version. The parallel versions split only independent output
// elements across threads and keep every per-element summation order, so
// both produce bitwise-identical results.

#include <cstddef>
#include <span>
#include <vector>

#include "sparf/core/tensor.hpp"

namespace sparf::core::kernels {

/// out[i] = scale * dot(q, rows.row(i)).
void row_logits_serial(std::span<const double> q, const Matrix& rows, double scale,
                       std::span<double> out);
void row_logits_parallel(std::span<const double> q, const Matrix& rows, double scale,
                         std::span<double> out);

/// out[c] = sum_i weights[i] * rows(i, c), summed in increasing i.
void weighted_row_sum_serial(std::span<const double> weights, const Matrix& rows,
                             std::span<double> out);
void weighted_row_sum_parallel(std::span<const double> weights, const Matrix& rows,
                               std::span<double> out);

/// Numerically stable softmax in place. Serial: the normalizer is a reduction
/// and must keep a fixed order.
void softmax_inplace(std::span<double> x);

/// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

/// Dispatches to the parallel kernel for large inputs.
void row_logits(std::span<const double> q, const Matrix& rows, double scale,
                std::span<double> out);
void weighted_row_sum(std::span<const double> weights, const Matrix& rows,
                      std::span<double> out);

}  // namespace sparf::core::kernels
