#include "sparf/system/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "sparf/engine/head_schedule.hpp"
#include "sparf/errors.hpp"
#include "sparf/layout/geometry.hpp"
#include "sparf/system/roofline.hpp"

namespace sparf::system {

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::kInstInfer: return "instinfer";
    case SystemKind::kHostOffload: return "host-offload";
    case SystemKind::kSsdOffload: return "ssd-offload";
  }
  return "?";
}

SystemKind system_kind_from(const std::string& name) {
  if (name == "instinfer") return SystemKind::kInstInfer;
  if (name == "host-offload") return SystemKind::kHostOffload;
  if (name == "ssd-offload") return SystemKind::kSsdOffload;
  throw ConfigError("unknown system '" + name + "' (expected instinfer, host-offload, ssd-offload)");
}

void SparsitySpec::validate() const {
  if (!(ratio > 0 && ratio <= 1)) throw ConfigError("sparsity: ratio must lie in (0, 1]");
  if (!(first_step_retention > 0 && first_step_retention <= 1))
    throw ConfigError("sparsity: first_step_retention must lie in (0, 1]");
}

std::size_t SparsitySpec::kept_embeddings(std::size_t head_dim) const {
  const auto r = static_cast<std::size_t>(std::ceil(static_cast<double>(head_dim) * ratio - 1e-9));
  return std::clamp<std::size_t>(r, 1, head_dim);
}

std::size_t SparsitySpec::kept_tokens(std::size_t seq_len) const {
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(seq_len) * ratio - 1e-9));
  return std::clamp<std::size_t>(k, 1, seq_len);
}

void Scenario::validate() const {
  model.validate();
  hardware.validate();
  sparsity.validate();
  flash_geometry.validate();
  flash_timing.validate();
  engine.validate();
  if (workload.batch < 1) throw ConfigError("workload: batch must be >= 1");
  if (workload.s_in < 1) throw ConfigError("workload: s_in must be >= 1");
  (void)layout::group_size_tokens(flash_geometry.page_size, model.head_dim(), model.element_bytes);
}

namespace {

double share(double part, double total) { return total > 0 ? part / total : 0.0; }

}  // namespace

double ScenarioReport::weight_share() const { return share(weight_access_s, category_sum()); }
double ScenarioReport::kv_share() const { return share(kv_access_s, category_sum()); }
double ScenarioReport::compute_share() const { return share(compute_s, category_sum()); }
double ScenarioReport::transfer_share() const { return share(transfer_s, category_sum()); }

namespace {

struct Common {
  double weights = 0;
  double free_vram = 0;  // VRAM left for KV and buffers
  double layer_prompt_kv = 0;
  std::size_t token_group = 0;
  std::size_t embedding_group = 0;
  bool sparse = false;
};

Common common_setup(const Scenario& sc) {
  sc.validate();
  const auto& m = sc.model;
  const auto& hw = sc.hardware;
  Common c;
  c.weights = m.weight_bytes();
  if (c.weights + hw.activation_reserve_bytes > hw.gpu_vram_bytes)
    throw CapacityError("gpu_vram", "model weights (" + std::to_string(c.weights / kGiB) +
                                        " GiB) plus activations exceed GPU VRAM");
  c.free_vram = hw.gpu_vram_bytes - c.weights - hw.activation_reserve_bytes;
  c.layer_prompt_kv = kv_cache_bytes(m, sc.workload.batch, sc.workload.s_in) / static_cast<double>(m.layers);
  c.token_group = layout::group_size_tokens(sc.flash_geometry.page_size, m.head_dim(), m.element_bytes);
  c.embedding_group =
      layout::default_embedding_group(sc.flash_geometry.page_size, m.max_context, m.element_bytes);
  c.sparse = sc.sparsity.sparse && sc.sparsity.ratio < 1.0;
  return c;
}

engine::HeadWork head_work(const Scenario& sc, const Common& c, std::size_t seq_len) {
  const std::size_t dh = sc.model.head_dim();
  const std::size_t page = sc.flash_geometry.page_size;
  if (!c.sparse) return engine::HeadWork::dense(dh, seq_len, c.token_group, page, sc.model.element_bytes);
  return engine::HeadWork::expected(dh, seq_len, sc.sparsity.kept_embeddings(dh),
                                    sc.sparsity.kept_tokens(seq_len), c.token_group,
                                    c.embedding_group, page, sc.sparsity.first_step_retention,
                                    sc.model.element_bytes);
}

/// Bytes that reach the attention arithmetic after filtering, for one head.
double used_bytes(const engine::HeadWork& w) {
  const double eb = static_cast<double>(w.element_bytes);
  const double dh = static_cast<double>(w.head_dim);
  const double s = static_cast<double>(w.seq_len);
  if (!w.sparse) return 2 * s * dh * eb;
  return (static_cast<double>(w.kept_embeddings) * s + 2 * static_cast<double>(w.kept_tokens) * dh) * eb;
}

/// Layer-wise pipeline of GPU compute and KV movement: the KV of layer i
/// moves while layer i+1 computes.
double layerwise(double compute, double move, std::size_t layers) {
  return compute + static_cast<double>(layers - 1) * std::max(compute, move) + move;
}

double prefill_gpu_layer(const Scenario& sc) {
  const auto& m = sc.model;
  const auto b = sc.workload.batch;
  const auto s = sc.workload.s_in;
  return dense_layer_cost(Phase::kPrefill, m, b, s, sc.hardware).time_s +
         operator_cost(Operator::kLogit, Phase::kPrefill, m, b, s, sc.hardware).time_s +
         operator_cost(Operator::kAttend, Phase::kPrefill, m, b, s, sc.hardware).time_s;
}

void finish(ScenarioReport& r, const Scenario& sc) {
  r.kv_cache_bytes = kv_cache_bytes(sc.model, sc.workload.batch, sc.workload.s_in + sc.workload.s_out);
  r.decode_per_token_s = sc.workload.s_out > 0 ? r.decode_total_s / static_cast<double>(sc.workload.s_out) : 0.0;
  const double total = r.prefill_s + r.decode_total_s;
  r.throughput_tok_s = total > 0 ? static_cast<double>(sc.workload.batch * sc.workload.s_out) / total : 0.0;
}

}  // namespace

ScenarioReport simulate_instinfer(const Scenario& sc) {
  const Common c = common_setup(sc);
  const auto& m = sc.model;
  const auto& hw = sc.hardware;
  const auto& g = sc.flash_geometry;
  const double n_csd = static_cast<double>(hw.csd_count);
  const auto b = sc.workload.batch;
  const double L = static_cast<double>(m.layers);
  const double eb = static_cast<double>(m.element_bytes);
  const double dh = static_cast<double>(m.head_dim());

  // Prompt KV of one layer is staged in VRAM (double-buffered) on its way out.
  const double prefill_buffer = 2 * c.layer_prompt_kv;
  if (prefill_buffer > c.free_vram)
    throw CapacityError("prefill layer buffer", "layer-wise prefill buffer of " +
                                                    std::to_string(prefill_buffer / kGiB) +
                                                    " GiB exceeds free GPU VRAM");
  // K is stored twice on flash.
  const double final_kv = kv_cache_bytes(m, b, sc.workload.s_in + sc.workload.s_out);
  const double flash_bytes_per_csd = 1.5 * final_kv / n_csd;
  if (flash_bytes_per_csd > static_cast<double>(g.capacity_bytes()))
    throw CapacityError("csd_capacity", "KV cache needs " + std::to_string(flash_bytes_per_csd / 1e9) +
                                            " GB per CSD, capacity is " +
                                            std::to_string(static_cast<double>(g.capacity_bytes()) / 1e9) + " GB");

  const auto load = engine::make_load_model(g, sc.flash_timing, sc.engine);
  const double page = static_cast<double>(g.page_size);
  const double page_s = load.page_us() * 1e-6;
  const double channels = static_cast<double>(g.channels);

  ScenarioReport r;
  r.peak_vram_bytes = c.weights + hw.activation_reserve_bytes + prefill_buffer;

  // Prefill: push each layer's KV to the CSDs and program it into flash.
  {
    const double push = c.layer_prompt_kv / (hw.pcie_csd * n_csd);
    const double per_die = page / ((sc.flash_timing.t_program_page_us + load.page_us()) * 1e-6);
    const double per_channel = std::min(static_cast<double>(g.dies_per_channel) * per_die, page / page_s);
    const double program = 1.5 * c.layer_prompt_kv / (channels * per_channel * n_csd);
    r.prefill_s = layerwise(prefill_gpu_layer(sc), std::max(push, program), m.layers);
  }

  const double units = static_cast<double>(b * m.heads) / n_csd;  // (request, head) pairs per CSD
  // Amortized page programs per appended token: K and V token groups plus
  // the embedding stripes of the second K copy.
  const double stripe_tokens = static_cast<double>(
      layout::embedding_stripe_tokens(g.page_size, c.embedding_group, m.element_bytes));
  const double write_pages_per_token =
      2.0 / static_cast<double>(c.token_group) +
      std::ceil(dh / static_cast<double>(c.embedding_group)) / stripe_tokens;

  for (std::size_t t = 0; t < sc.workload.s_out; ++t) {
    const std::size_t seq = sc.workload.s_in + t + 1;
    const OperatorCost gpu = dense_layer_cost(Phase::kDecode, m, b, seq, hw);
    const double weight = std::min(gpu.time_s, gpu.weight_bytes / hw.gpu_vram_bandwidth);

    const engine::HeadWork work = head_work(sc, c, seq);
    const auto demand = engine::resource_demand(sc.engine, work, load);
    const double attention = engine::pipelined_makespan_us(sc.engine, work, load, units) * 1e-6;
    const double flash_busy = std::min(attention, units * demand.flash_us * 1e-6);
    const double writes = units * write_pages_per_token * page_s / channels;
    const double xfer = units * 4 * dh * eb / hw.pcie_csd;  // q, k, v in; output back
    const double host = static_cast<double>(b * m.heads) * hw.host_orchestration_s;
    const double csd = host + xfer + attention + writes;

    const double layer = gpu.time_s / 2 + std::max(gpu.time_s, csd) / 2 + csd / 2;
    r.decode_total_s += L * layer;
    r.weight_access_s += L * weight;
    r.compute_s += L * (gpu.time_s - weight + (attention - flash_busy));
    r.kv_access_s += L * (flash_busy + writes);
    r.transfer_s += L * (xfer + host);
    r.kv_bytes_loaded += L * static_cast<double>(b * m.heads) * static_cast<double>(work.loaded_bytes());
    r.kv_bytes_used += L * static_cast<double>(b * m.heads) * used_bytes(work);
    if (t + 1 == sc.workload.s_out) r.last_step_stages = engine::stage_latencies(sc.engine, work, load);
  }
  finish(r, sc);
  return r;
}

ScenarioReport simulate_baseline(const Scenario& sc) {
  if (sc.system == SystemKind::kInstInfer) throw ConfigError("simulate_baseline: not a baseline system");
  const Common c = common_setup(sc);
  const auto& m = sc.model;
  const auto& hw = sc.hardware;
  const auto b = sc.workload.batch;
  const double L = static_cast<double>(m.layers);
  const bool host_tier = sc.system == SystemKind::kHostOffload;
  const double host_kv_capacity = std::max(0.0, hw.host_memory_bytes - hw.host_reserve_bytes);
  const double ssd_bw = std::min(hw.ssd_effective_bandwidth(), hw.pcie_gpu_host);

  const double final_kv = kv_cache_bytes(m, b, sc.workload.s_in + sc.workload.s_out);
  if (!host_tier && final_kv - c.free_vram > hw.ssd_capacity_bytes * static_cast<double>(hw.ssd_count))
    throw CapacityError("ssd_capacity", "KV cache exceeds SSD capacity");

  // Time to move `bytes` of off-VRAM KV between its tier and the GPU.
  auto move_time = [&](double off_vram) {
    if (!host_tier) return off_vram / ssd_bw;
    const double in_host = std::min(off_vram, host_kv_capacity);
    return in_host / hw.pcie_gpu_host + (off_vram - in_host) / hw.swap_bandwidth;
  };

  ScenarioReport r;
  r.peak_vram_bytes = c.weights + hw.activation_reserve_bytes + std::min(final_kv, c.free_vram);
  {
    const double prompt_kv = kv_cache_bytes(m, b, sc.workload.s_in);
    const double off = std::max(0.0, prompt_kv - c.free_vram);
    r.prefill_s = layerwise(prefill_gpu_layer(sc), move_time(off) / L, m.layers);
  }

  for (std::size_t t = 0; t < sc.workload.s_out; ++t) {
    const std::size_t seq = sc.workload.s_in + t + 1;
    const OperatorCost gpu = dense_layer_cost(Phase::kDecode, m, b, seq, hw);
    const double weight = std::min(gpu.time_s, gpu.weight_bytes / hw.gpu_vram_bandwidth);

    const double kv = kv_cache_bytes(m, b, seq);
    const double off = std::max(0.0, kv - c.free_vram);
    // Sparse baselines fetch the same page groups SparF would.
    const engine::HeadWork work = head_work(sc, c, seq);
    const double dense_pages = 2.0 * std::ceil(static_cast<double>(seq) / static_cast<double>(c.token_group));
    const double fraction = std::min(
        1.0, static_cast<double>(work.column_pages + work.key_row_pages + work.value_row_pages) / dense_pages);
    const double used_fraction = used_bytes(work) / (2.0 * static_cast<double>(seq * m.head_dim() * m.element_bytes));

    const double fetch = move_time(off * fraction) / L;
    const double new_kv = kv_cache_bytes(m, b, 1) / L;
    const double store = off > 0 ? move_time(new_kv) : 0.0;
    const double attn = used_fraction * (operator_cost(Operator::kLogit, Phase::kDecode, m, b, seq, hw).time_s +
                                         operator_cost(Operator::kAttend, Phase::kDecode, m, b, seq, hw).time_s);
    const double layer = std::max(gpu.time_s + attn, fetch + store);

    r.decode_total_s += L * layer;
    r.weight_access_s += L * weight;
    r.compute_s += L * (gpu.time_s - weight + attn);
    r.kv_access_s += L * (fetch + store);
    r.kv_bytes_loaded += off * fraction;
    r.kv_bytes_used += kv * used_fraction;
  }
  finish(r, sc);
  return r;
}

ScenarioReport simulate(const Scenario& scenario) {
  return scenario.system == SystemKind::kInstInfer ? simulate_instinfer(scenario)
                                                   : simulate_baseline(scenario);
}

}  // namespace sparf::system
