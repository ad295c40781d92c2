#pragma once

#include <cstdint>
#include <string>

#include "sparf/engine/engine_model.hpp"
#include "sparf/system/model.hpp"

namespace sparf::system {

enum class SystemKind { kInstInfer, kHostOffload, kSsdOffload };

std::string to_string(SystemKind kind);
/// Accepts "instinfer", "host-offload", "ssd-offload"; throws ConfigError.
SystemKind system_kind_from(const std::string& name);

struct Workload {
  std::size_t batch = 1;
  std::size_t s_in = 1024;
  std::size_t s_out = 1024;
};

struct SparsitySpec {
  bool sparse = false;
  double ratio = 1.0;  // r = d_h * ratio, k = S * ratio
  /// Share of the items inside a touched page group that end up selected.
  double first_step_retention = 0.5;

  void validate() const;
  std::size_t kept_embeddings(std::size_t head_dim) const;
  std::size_t kept_tokens(std::size_t seq_len) const;
};

struct Scenario {
  std::string id = "scenario";
  ModelSpec model;
  HardwareSpec hardware;
  Workload workload;
  SystemKind system = SystemKind::kInstInfer;
  SparsitySpec sparsity;
  flash::FlashGeometry flash_geometry;
  flash::FlashTiming flash_timing;
  engine::EngineConfig engine;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScenarioReport {
  double prefill_s = 0;
  double decode_total_s = 0;
  double decode_per_token_s = 0;
  // Decode busy time by category, summed over steps. Overlapped resources
  // make their sum exceed decode_total_s; shares normalize by the sum.
  double weight_access_s = 0;
  double kv_access_s = 0;
  double compute_s = 0;
  double transfer_s = 0;
  double throughput_tok_s = 0;
  double peak_vram_bytes = 0;
  double kv_cache_bytes = 0;
  // KV bytes moved off-VRAM (baselines) or over flash channels (CSDs) per
  // decode, and the bytes that reach compute after filtering.
  double kv_bytes_loaded = 0;
  double kv_bytes_used = 0;
  /// Per-head stage breakdown of the last decode step (CSD systems only).
  engine::StageBreakdown last_step_stages;

  double category_sum() const { return weight_access_s + kv_access_s + compute_s + transfer_s; }
  double weight_share() const;
  double kv_share() const;
  double compute_share() const;
  double transfer_share() const;
};

/// Dispatches on scenario.system.
ScenarioReport simulate(const Scenario& scenario);

/// GPU runs projections/FFN; attention runs inside the CSDs. Throws
/// CapacityError naming the binding constraint when infeasible.
ScenarioReport simulate_instinfer(const Scenario& scenario);

/// KV cache beyond free VRAM lives in host memory (host-offload, with
/// overflow swapped to disk) or on SSDs behind the host filesystem
/// (ssd-offload); attention runs on the GPU after each layer's KV is fetched.
ScenarioReport simulate_baseline(const Scenario& scenario);

}  // namespace sparf::system
