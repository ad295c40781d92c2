#pragma once

// Timing model of the in-storage attention engine: an argtopk unit, per-channel
// filters in the flash controllers, and two identical MAC-array kernels.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sparf/core/tensor.hpp"
#include "sparf/flash/simulator.hpp"

namespace sparf::engine {

struct EngineConfig {
  double clock_hz = 285e6;
  std::size_t macs_per_cycle = 768;  // across all kernels
  double softmax_throughput = 1.0;   // elements/cycle
  double argtopk_throughput = 1.0;   // elements/cycle
  double nfc_filter_rate = 8.0;      // bytes/cycle per channel
  std::size_t kernel_count = 2;
  double output_bandwidth = 3.5e9;   // bytes/s, result vector back to the host

  void validate() const;
  std::size_t macs_per_kernel() const { return macs_per_cycle / kernel_count; }
  double cycles_to_us(double cycles) const { return cycles / clock_hz * 1e6; }
};

/// ceil(macs / units).
std::uint64_t gemv_cycles(std::uint64_t macs, std::uint64_t units);

/// What one head costs the engine for one decode step.
struct HeadWork {
  std::size_t head_dim = 128;
  std::size_t seq_len = 0;
  std::size_t kept_embeddings = 0;  // r
  std::size_t kept_tokens = 0;      // k
  std::size_t element_bytes = 2;
  std::size_t page_size = 4096;
  std::size_t column_pages = 0;     // embedding-indexed K pages (first step)
  std::size_t key_row_pages = 0;    // token-indexed K pages
  std::size_t value_row_pages = 0;  // token-indexed V pages
  bool sparse = true;               // false: full attention, rows only

  void validate() const;

  /// Page counts taken from the traces of a functional SparF run.
  static HeadWork from_result(const core::HeadConfig& cfg, const core::AttentionResult& result);

  /// Dense attention over S tokens: every token group of K and V.
  static HeadWork dense(std::size_t head_dim, std::size_t seq_len, std::size_t token_group,
                        std::size_t page_size, std::size_t element_bytes = 2);

  /// Expected page counts for top-r/top-k selection. A fraction f of the
  /// items is kept; each page group is touched with probability
  /// min(1, f / retention), i.e. selections cluster so that a group kept at
  /// all holds `retention` of its items.
  static HeadWork expected(std::size_t head_dim, std::size_t seq_len, std::size_t r, std::size_t k,
                           std::size_t token_group, std::size_t embedding_group,
                           std::size_t page_size, double retention,
                           std::size_t element_bytes = 2);

  std::size_t loaded_bytes() const { return (column_pages + key_row_pages + value_row_pages) * page_size; }
};

/// Loading pages from the channels of one device.
struct FlashLoadModel {
  flash::FlashGeometry geometry;
  flash::FlashTiming timing;
  double filter_bytes_per_s = 0;  // 0: filter never limits

  /// Channel time per page: transfer, or filter time if slower.
  double page_us() const;
  /// Time the channel array is busy for `pages` pages spread evenly.
  double occupancy_us(double pages) const;
  /// First-command latency: overhead plus array read (0 pages -> 0).
  double latency_us(double pages) const;
  /// latency + occupancy.
  double load_us(std::size_t pages) const;
  /// Same load, measured on the discrete-event simulator with pages striped
  /// round-robin over channels and dies.
  double simulated_us(std::size_t pages) const;
};

FlashLoadModel make_load_model(const flash::FlashGeometry& g, const flash::FlashTiming& t,
                               const EngineConfig& e);

enum class Stage : std::size_t {
  kLogit0,
  kArgTopKR,
  kKColLoad,
  kArgTopKK,
  kKVRowLoad,
  kLogit,
  kAttend,
  kOutput,
};
inline constexpr std::size_t kStageCount = 8;
std::string_view stage_name(Stage s);

struct Segment {
  Stage stage;
  double us;
};

struct StageBreakdown {
  std::array<double, kStageCount> stage_us{};
  std::array<std::size_t, kStageCount> stage_bytes{};  // flash bytes for load stages
  std::vector<Segment> critical_path;  // exclusive segments; sum == total_us
  double total_us = 0;

  double operator[](Stage s) const { return stage_us[static_cast<std::size_t>(s)]; }
  double stage_sum() const;
};

/// Per-stage durations and the critical path of one head running alone.
/// The V-row load overlaps Logit; the column load cannot start before the
/// embedding argtopk.
StageBreakdown stage_latencies(const EngineConfig& cfg, const HeadWork& work,
                               const FlashLoadModel& load);

/// Per-head amounts of each shared resource, in µs.
struct ResourceDemand {
  double flash_us = 0;    // channel occupancy
  double kernel_us = 0;   // MAC-array work, summed over both kernels' share
  double argtopk_us = 0;
  double output_us = 0;
  /// The steady-state interval between head completions.
  double bottleneck_us(std::size_t kernels) const;
};
ResourceDemand resource_demand(const EngineConfig& cfg, const HeadWork& work,
                               const FlashLoadModel& load);

/// Heads per second one device can sustain, from each bound alone.
struct ThroughputBounds {
  double flash_heads_per_s = 0;
  double compute_heads_per_s = 0;
  double bound() const;
};
ThroughputBounds throughput_bounds(const EngineConfig& cfg, const HeadWork& work,
                                   const FlashLoadModel& load);

}  // namespace sparf::engine
