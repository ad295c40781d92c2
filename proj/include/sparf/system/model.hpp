#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sparf::system {

inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

struct ModelSpec {
  std::string name = "opt-13b";
  std::size_t layers = 40;
  std::size_t hidden = 5120;
  std::size_t heads = 40;
  double parameters = 12.85e9;
  std::size_t element_bytes = 2;
  std::size_t ffn_multiplier = 4;
  std::size_t max_context = 2048;

  void validate() const;
  std::size_t head_dim() const { return hidden / heads; }
  /// K and V bytes one token adds across all layers.
  double kv_bytes_per_token() const;
  double weight_bytes() const { return parameters * static_cast<double>(element_bytes); }
  double layer_weight_bytes() const { return weight_bytes() / static_cast<double>(layers); }

  static ModelSpec opt_13b();
  static ModelSpec opt_6_7b();
  static ModelSpec opt_30b();
  /// Throws ConfigError for an unknown name.
  static ModelSpec by_name(const std::string& name);
};

/// 2 (K and V) x element_bytes x H x L x b x s.
double kv_cache_bytes(const ModelSpec& model, std::size_t batch, std::size_t seq_len);

struct HardwareSpec {
  // GPU
  double gpu_peak_flops = 154.8e12;
  double gpu_vram_bandwidth = 768e9;
  double gpu_vram_bytes = 48 * kGiB;
  double activation_reserve_bytes = 2 * kGiB;
  // Host
  double host_memory_bytes = 96 * kGiB;
  double host_reserve_bytes = 8 * kGiB;
  double pcie_gpu_host = 32e9;
  double swap_bandwidth = 0.25e9;  // host memory overflow paged to disk
  // Storage devices: plain SSDs for baselines, CSDs for in-storage attention
  std::size_t csd_count = 1;
  std::size_t ssd_count = 1;
  double pcie_csd = 3.5e9;            // external link of one SSD or CSD
  double ssd_capacity_bytes = 2e12;
  double host_fs_derate = 0.2;        // bandwidth lost to the host filesystem
  double host_fs_ceiling = 1.2e9;     // host filesystem throughput, any SSD count
  double host_fs_overhead_s = 20e-6;  // per command
  double host_fs_command_bytes = 1024.0 * 1024.0;
  double host_orchestration_s = 3.5e-6;  // per (request, layer, head) CSD command

  void validate() const;
  /// Bytes/s the baselines achieve reading or writing KV on SSDs.
  double ssd_effective_bandwidth() const;
};

}  // namespace sparf::system
