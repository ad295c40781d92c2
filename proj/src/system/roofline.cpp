#include "sparf/system/roofline.hpp"

#include <algorithm>

namespace sparf::system {

std::string_view operator_name(Operator op) {
  switch (op) {
    case Operator::kQkvProj: return "qkv_proj";
    case Operator::kOProj: return "o_proj";
    case Operator::kFfn: return "ffn";
    case Operator::kLogit: return "logit";
    case Operator::kAttend: return "attend";
  }
  return "?";
}

OperatorCost operator_cost(Operator op, Phase phase, const ModelSpec& model, std::size_t batch,
                           std::size_t s, const HardwareSpec& hw) {
  OperatorCost c;
  if (batch == 0 || s == 0) return c;
  const double b = static_cast<double>(batch);
  const double len = static_cast<double>(s);
  const double h = static_cast<double>(model.hidden);
  const double eb = static_cast<double>(model.element_bytes);
  const double f = static_cast<double>(model.ffn_multiplier);
  const double heads = static_cast<double>(model.heads);
  const double tokens = phase == Phase::kPrefill ? b * len : b;
  // Positions each query attends over: the prompt in prefill, the cache in decode.
  const double scores = phase == Phase::kPrefill ? b * heads * len * len : b * heads * len;
  const double queries = tokens;

  switch (op) {
    case Operator::kQkvProj:
      c.flops = 2 * tokens * 3 * h * h;
      c.weight_bytes = 3 * h * h * eb;
      c.bytes = c.weight_bytes + tokens * 4 * h * eb;
      break;
    case Operator::kOProj:
      c.flops = 2 * tokens * h * h;
      c.weight_bytes = h * h * eb;
      c.bytes = c.weight_bytes + tokens * 2 * h * eb;
      break;
    case Operator::kFfn:
      c.flops = 2 * tokens * 2 * f * h * h;
      c.weight_bytes = 2 * f * h * h * eb;
      c.bytes = c.weight_bytes + tokens * (2 + f) * h * eb;
      break;
    case Operator::kLogit:
      c.flops = 2 * scores * h / heads;
      c.bytes = (b * len * h + queries * h + scores) * eb;
      break;
    case Operator::kAttend:
      c.flops = 2 * scores * h / heads;
      c.bytes = (b * len * h + scores + queries * h) * eb;
      break;
  }
  c.time_s = std::max(c.flops / hw.gpu_peak_flops, c.bytes / hw.gpu_vram_bandwidth);
  return c;
}

OperatorCost dense_layer_cost(Phase phase, const ModelSpec& model, std::size_t batch,
                              std::size_t s, const HardwareSpec& hw) {
  OperatorCost total;
  for (Operator op : {Operator::kQkvProj, Operator::kOProj, Operator::kFfn}) {
    const OperatorCost c = operator_cost(op, phase, model, batch, s, hw);
    total.flops += c.flops;
    total.bytes += c.bytes;
    total.weight_bytes += c.weight_bytes;
    total.time_s += c.time_s;
  }
  return total;
}

}  // namespace sparf::system
