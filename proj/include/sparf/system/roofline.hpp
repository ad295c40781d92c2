#pragma once

#include <cstddef>
#include <string_view>

#include "sparf/system/model.hpp"

namespace sparf::system {

enum class Operator { kQkvProj, kOProj, kFfn, kLogit, kAttend };
enum class Phase { kPrefill, kDecode };

std::string_view operator_name(Operator op);

struct OperatorCost {
  double flops = 0;
  double bytes = 0;         // all bytes read or written from VRAM
  double weight_bytes = 0;  // part of `bytes` that is model weights
  double time_s = 0;        // max(flops / peak, bytes / bandwidth)

  double intensity() const { return bytes > 0 ? flops / bytes : 0.0; }
};

/// Per-decoder-layer cost of one operator on the GPU. In prefill `s` is the
/// prompt length processed for each of the `batch` requests; in decode one
/// new token per request attends over `s` cached tokens.
OperatorCost operator_cost(Operator op, Phase phase, const ModelSpec& model, std::size_t batch,
                           std::size_t s, const HardwareSpec& hw);

/// Sum of the projection and FFN operators (everything but attention).
OperatorCost dense_layer_cost(Phase phase, const ModelSpec& model, std::size_t batch,
                              std::size_t s, const HardwareSpec& hw);

}  // namespace sparf::system
