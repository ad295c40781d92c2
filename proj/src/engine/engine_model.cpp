#include "sparf/engine/engine_model.hpp"

#include <algorithm>
#include <cmath>

#include "sparf/errors.hpp"

namespace sparf::engine {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

double elementwise_cycles(std::size_t elements, double per_cycle) {
  return std::ceil(static_cast<double>(elements) / per_cycle);
}

}  // namespace

void EngineConfig::validate() const {
  if (!(clock_hz > 0)) throw ConfigError("EngineConfig: clock_hz must be > 0");
  if (kernel_count != 2) throw ConfigError("EngineConfig: kernel_count must be 2");
  if (macs_per_cycle < kernel_count)
    throw ConfigError("EngineConfig: macs_per_cycle must cover every kernel");
  if (!(softmax_throughput > 0) || !(argtopk_throughput > 0) || !(nfc_filter_rate > 0) ||
      !(output_bandwidth > 0))
    throw ConfigError("EngineConfig: throughputs must be > 0");
}

std::uint64_t gemv_cycles(std::uint64_t macs, std::uint64_t units) {
  if (units == 0) throw ConfigError("gemv_cycles: zero MAC units");
  return (macs + units - 1) / units;
}

void HeadWork::validate() const {
  if (head_dim < 1 || seq_len < 1) throw ConfigError("HeadWork: d_h and S must be >= 1");
  if (sparse && (kept_embeddings < 1 || kept_embeddings > head_dim))
    throw ConfigError("HeadWork: r must lie in [1, d_h]");
  if (sparse && (kept_tokens < 1 || kept_tokens > seq_len))
    throw ConfigError("HeadWork: k must lie in [1, S]");
  if (page_size < 1 || element_bytes < 1) throw ConfigError("HeadWork: page and element size must be >= 1");
}

HeadWork HeadWork::from_result(const core::HeadConfig& cfg, const core::AttentionResult& result) {
  HeadWork w;
  w.head_dim = cfg.head_dim;
  w.seq_len = cfg.seq_len;
  w.kept_embeddings = cfg.kept_embeddings;
  w.kept_tokens = cfg.kept_tokens;
  w.element_bytes = cfg.element_bytes;
  w.page_size = result.row_trace.page_size;
  w.column_pages = result.column_trace.pages_requested;
  w.key_row_pages = result.row_trace.pages_requested / 2;
  w.value_row_pages = result.row_trace.pages_requested - w.key_row_pages;
  return w;
}

HeadWork HeadWork::dense(std::size_t head_dim, std::size_t seq_len, std::size_t token_group,
                         std::size_t page_size, std::size_t element_bytes) {
  HeadWork w;
  w.head_dim = head_dim;
  w.seq_len = seq_len;
  w.kept_embeddings = head_dim;
  w.kept_tokens = seq_len;
  w.element_bytes = element_bytes;
  w.page_size = page_size;
  w.key_row_pages = w.value_row_pages = ceil_div(seq_len, token_group);
  w.sparse = false;
  return w;
}

HeadWork HeadWork::expected(std::size_t head_dim, std::size_t seq_len, std::size_t r,
                            std::size_t k, std::size_t token_group, std::size_t embedding_group,
                            std::size_t page_size, double retention, std::size_t element_bytes) {
  if (!(retention > 0 && retention <= 1)) throw ConfigError("retention must lie in (0, 1]");
  HeadWork w;
  w.head_dim = head_dim;
  w.seq_len = seq_len;
  w.kept_embeddings = r;
  w.kept_tokens = k;
  w.element_bytes = element_bytes;
  w.page_size = page_size;
  w.validate();

  auto touched = [&](std::size_t kept, std::size_t extent, std::size_t group) {
    const std::size_t groups = ceil_div(extent, group);
    const double f = std::min(1.0, static_cast<double>(kept) / static_cast<double>(extent) / retention);
    const auto est = static_cast<std::size_t>(std::ceil(f * static_cast<double>(groups) - 1e-9));
    return std::clamp(est, ceil_div(kept, group), groups);
  };
  const std::size_t stripe = page_size / (embedding_group * element_bytes);
  w.column_pages = touched(r, head_dim, embedding_group) * ceil_div(seq_len, stripe);
  w.key_row_pages = w.value_row_pages = touched(k, seq_len, token_group);
  return w;
}

double FlashLoadModel::page_us() const {
  const double xfer = timing.transfer_us(geometry.page_size);
  if (filter_bytes_per_s <= 0) return xfer;
  return std::max(xfer, static_cast<double>(geometry.page_size) / filter_bytes_per_s * 1e6);
}

double FlashLoadModel::occupancy_us(double pages) const {
  if (pages <= 0) return 0.0;
  return std::ceil(pages / static_cast<double>(geometry.channels) - 1e-9) * page_us();
}

double FlashLoadModel::latency_us(double pages) const {
  if (pages <= 0) return 0.0;
  return timing.command_overhead_us + timing.t_read_page_us;
}

double FlashLoadModel::load_us(std::size_t pages) const {
  return latency_us(static_cast<double>(pages)) + occupancy_us(static_cast<double>(pages));
}

double FlashLoadModel::simulated_us(std::size_t pages) const {
  if (pages == 0) return 0.0;
  std::vector<flash::PhysicalPageAddress> addrs;
  addrs.reserve(pages);
  for (std::size_t i = 0; i < pages; ++i) {
    flash::PhysicalPageAddress a;
    a.channel = static_cast<std::uint32_t>(i % geometry.channels);
    const std::size_t nth = i / geometry.channels;
    a.die = static_cast<std::uint32_t>(nth % geometry.dies_per_channel);
    a.page = static_cast<std::uint32_t>((nth / geometry.dies_per_channel) % geometry.pages_per_block);
    addrs.push_back(a);
  }
  flash::FlashTiming t = timing;
  if (filter_bytes_per_s > 0)
    t.channel_bandwidth = std::min(t.channel_bandwidth, filter_bytes_per_s);
  flash::FlashSimulator sim(geometry, t);
  return sim.schedule_reads(addrs).makespan_us();
}

FlashLoadModel make_load_model(const flash::FlashGeometry& g, const flash::FlashTiming& t,
                               const EngineConfig& e) {
  return FlashLoadModel{g, t, e.nfc_filter_rate * e.clock_hz};
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kLogit0: return "logit0";
    case Stage::kArgTopKR: return "argtopk_r";
    case Stage::kKColLoad: return "kcol_load";
    case Stage::kArgTopKK: return "argtopk_k";
    case Stage::kKVRowLoad: return "kvrow_load";
    case Stage::kLogit: return "logit";
    case Stage::kAttend: return "attend";
    case Stage::kOutput: return "output";
  }
  return "?";
}

double StageBreakdown::stage_sum() const {
  double s = 0;
  for (double v : stage_us) s += v;
  return s;
}

namespace {

struct StageCosts {
  double argtopk_r = 0, kcol = 0, logit0 = 0, argtopk_k = 0;
  double krow = 0, vrow = 0, logit = 0, attend = 0, out = 0;
};

StageCosts costs(const EngineConfig& cfg, const HeadWork& w, const FlashLoadModel& load) {
  cfg.validate();
  w.validate();
  const std::uint64_t units = cfg.macs_per_kernel();
  const std::size_t k = w.sparse ? w.kept_tokens : w.seq_len;
  StageCosts c;
  if (w.sparse) {
    c.argtopk_r = cfg.cycles_to_us(elementwise_cycles(w.head_dim, cfg.argtopk_throughput));
    c.kcol = load.load_us(w.column_pages);
    c.logit0 = cfg.cycles_to_us(static_cast<double>(gemv_cycles(w.kept_embeddings * w.seq_len, units)) +
                                elementwise_cycles(w.seq_len, cfg.softmax_throughput));
    c.argtopk_k = cfg.cycles_to_us(elementwise_cycles(w.seq_len, cfg.argtopk_throughput));
  }
  c.krow = load.load_us(w.key_row_pages);
  // V pages are requested together with K; only their channel time remains.
  c.vrow = load.occupancy_us(static_cast<double>(w.value_row_pages));
  c.logit = cfg.cycles_to_us(static_cast<double>(gemv_cycles(k * w.head_dim, units)) +
                             elementwise_cycles(k, cfg.softmax_throughput));
  c.attend = cfg.cycles_to_us(static_cast<double>(gemv_cycles(k * w.head_dim, units)));
  c.out = static_cast<double>(w.head_dim * w.element_bytes) / cfg.output_bandwidth * 1e6;
  return c;
}

}  // namespace

StageBreakdown stage_latencies(const EngineConfig& cfg, const HeadWork& work,
                               const FlashLoadModel& load) {
  const StageCosts c = costs(cfg, work, load);
  StageBreakdown b;
  auto set = [&](Stage s, double us, std::size_t bytes = 0) {
    b.stage_us[static_cast<std::size_t>(s)] = us;
    b.stage_bytes[static_cast<std::size_t>(s)] = bytes;
  };
  set(Stage::kArgTopKR, c.argtopk_r);
  set(Stage::kKColLoad, c.kcol, work.column_pages * work.page_size);
  set(Stage::kLogit0, c.logit0);
  set(Stage::kArgTopKK, c.argtopk_k);
  set(Stage::kKVRowLoad, c.krow + c.vrow, (work.key_row_pages + work.value_row_pages) * work.page_size);
  set(Stage::kLogit, c.logit);
  set(Stage::kAttend, c.attend);
  set(Stage::kOutput, c.out, work.head_dim * work.element_bytes);

  auto seg = [&](Stage s, double us) {
    if (us > 0) b.critical_path.push_back({s, us});
  };
  seg(Stage::kArgTopKR, c.argtopk_r);
  seg(Stage::kKColLoad, c.kcol);
  seg(Stage::kLogit0, c.logit0);
  seg(Stage::kArgTopKK, c.argtopk_k);
  // Logit runs while V rows stream in; the longer of the two is exposed.
  if (c.vrow > c.logit) {
    seg(Stage::kKVRowLoad, c.krow + c.vrow);
  } else {
    seg(Stage::kKVRowLoad, c.krow);
    seg(Stage::kLogit, c.logit);
  }
  seg(Stage::kAttend, c.attend);
  seg(Stage::kOutput, c.out);
  for (const auto& s : b.critical_path) b.total_us += s.us;
  return b;
}

double ResourceDemand::bottleneck_us(std::size_t kernels) const {
  return std::max({flash_us, kernel_us / static_cast<double>(kernels), argtopk_us, output_us});
}

ResourceDemand resource_demand(const EngineConfig& cfg, const HeadWork& work,
                               const FlashLoadModel& load) {
  const StageCosts c = costs(cfg, work, load);
  ResourceDemand d;
  d.flash_us = load.occupancy_us(static_cast<double>(work.column_pages)) +
               load.occupancy_us(static_cast<double>(work.key_row_pages)) + c.vrow;
  d.kernel_us = c.logit0 + c.logit + c.attend;
  d.argtopk_us = c.argtopk_r + c.argtopk_k;
  d.output_us = c.out;
  return d;
}

double ThroughputBounds::bound() const { return std::min(flash_heads_per_s, compute_heads_per_s); }

ThroughputBounds throughput_bounds(const EngineConfig& cfg, const HeadWork& work,
                                   const FlashLoadModel& load) {
  work.validate();
  ThroughputBounds b;
  const double pages =
      static_cast<double>(work.column_pages + work.key_row_pages + work.value_row_pages);
  const double channel_rate = static_cast<double>(load.geometry.channels) / (load.page_us() * 1e-6);
  b.flash_heads_per_s = pages > 0 ? channel_rate / pages : INFINITY;
  const std::size_t k = work.sparse ? work.kept_tokens : work.seq_len;
  const double macs = static_cast<double>((work.sparse ? work.kept_embeddings * work.seq_len : 0) +
                                          2 * k * work.head_dim);
  b.compute_heads_per_s = static_cast<double>(cfg.macs_per_cycle) * cfg.clock_hz / macs;
  return b;
}

}  // namespace sparf::engine
