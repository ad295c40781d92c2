#include "sparf/system/model.hpp"

#include <algorithm>

#include "sparf/errors.hpp"

namespace sparf::system {

void ModelSpec::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1) throw ConfigError("model: layers, hidden, heads must be >= 1");
  if (hidden % heads != 0) throw ConfigError("model: hidden must be a multiple of heads");
  if (!(parameters > 0)) throw ConfigError("model: parameters must be > 0");
  if (element_bytes < 1 || ffn_multiplier < 1) throw ConfigError("model: element_bytes and ffn_multiplier must be >= 1");
}

double ModelSpec::kv_bytes_per_token() const {
  return 2.0 * static_cast<double>(element_bytes * hidden * layers);
}

ModelSpec ModelSpec::opt_13b() { return ModelSpec{}; }

ModelSpec ModelSpec::opt_6_7b() {
  ModelSpec m;
  m.name = "opt-6.7b";
  m.layers = 32;
  m.hidden = 4096;
  m.heads = 32;
  m.parameters = 6.66e9;
  return m;
}

ModelSpec ModelSpec::opt_30b() {
  ModelSpec m;
  m.name = "opt-30b";
  m.layers = 48;
  m.hidden = 7168;
  m.heads = 56;
  m.parameters = 29.97e9;
  return m;
}

ModelSpec ModelSpec::by_name(const std::string& name) {
  if (name == "opt-13b") return opt_13b();
  if (name == "opt-6.7b") return opt_6_7b();
  if (name == "opt-30b") return opt_30b();
  throw ConfigError("unknown model '" + name + "'");
}

double kv_cache_bytes(const ModelSpec& model, std::size_t batch, std::size_t seq_len) {
  return model.kv_bytes_per_token() * static_cast<double>(batch) * static_cast<double>(seq_len);
}

void HardwareSpec::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string("hardware: ") + name + " must be > 0");
  };
  positive(gpu_peak_flops, "gpu_peak_flops");
  positive(gpu_vram_bandwidth, "gpu_vram_bandwidth");
  positive(gpu_vram_bytes, "gpu_vram_bytes");
  positive(host_memory_bytes, "host_memory_bytes");
  positive(pcie_gpu_host, "pcie_gpu_host");
  positive(swap_bandwidth, "swap_bandwidth");
  positive(pcie_csd, "pcie_csd");
  positive(ssd_capacity_bytes, "ssd_capacity_bytes");
  positive(host_fs_ceiling, "host_fs_ceiling");
  positive(host_fs_command_bytes, "host_fs_command_bytes");
  if (csd_count < 1 || ssd_count < 1) throw ConfigError("hardware: csd_count and ssd_count must be >= 1");
  if (host_fs_derate < 0 || host_fs_derate >= 1) throw ConfigError("hardware: host_fs_derate must lie in [0, 1)");
  if (activation_reserve_bytes < 0 || host_reserve_bytes < 0 || host_fs_overhead_s < 0 ||
      host_orchestration_s < 0)
    throw ConfigError("hardware: reserves and overheads must be >= 0");
}

double HardwareSpec::ssd_effective_bandwidth() const {
  const double raw = static_cast<double>(ssd_count) * pcie_csd * (1.0 - host_fs_derate);
  const double streaming = std::min(raw, host_fs_ceiling);
  const double per_command = host_fs_command_bytes / streaming + host_fs_overhead_s;
  return host_fs_command_bytes / per_command;
}

}  // namespace sparf::system
