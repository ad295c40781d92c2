// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sparf/core/attention.hpp"
#include "sparf/flash/simulator.hpp"
#include "sparf/layout/kv_layout.hpp"
#include "sparf/oracle/scalar_sparf.hpp"
#include "sparf/system/scenario.hpp"
#include "sparf/system/sweep.hpp"

using namespace sparf;

namespace {

struct Outcome {
  bool ok = true;
  std::string note;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      note += (note.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. sparf(m=n=1) vs scalar transcription and SparQ; full selection vs dense.
Outcome algorithm_exactness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dims[] = {16, 64, 128}, lens[] = {32, 256, 1024};
  const int heads = 1000;
  std::vector<double> scalar_dev(heads), dense_dev(heads);
  std::vector<int> sparq_mismatch(heads);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < heads; ++i) {
    std::mt19937_64 rng(1000 + i);
    const std::size_t d = dims[i % 3], S = lens[(i / 3) % 3];
    const std::size_t r = 1 + rng() % d, k = 1 + rng() % S;
    const auto t = core::random_head(d, S, rng());
    const auto got = core::sparf_attention(t, {d, S, r, k, 1, 1});
    const auto ref = oracle::scalar_sparf(t, r, k, 1, 1);
    double dev = 0;
    for (std::size_t c = 0; c < d; ++c) dev = std::max(dev, std::abs(got.out[c] - ref.out[c]));
    scalar_dev[i] = dev;
    const auto sparq = core::sparq_attention(t, r, k);
    sparq_mismatch[i] = got.out != sparq.out || got.alpha != sparq.alpha;
    const auto full = core::sparf_attention(t, {d, S, d, S, 1, 1});
    const auto dense = core::dense_attention(t);
    double num = 0, den = 0;
    for (std::size_t c = 0; c < d; ++c) {
      num += (full.out[c] - dense[c]) * (full.out[c] - dense[c]);
      den += dense[c] * dense[c];
    }
    dense_dev[i] = std::sqrt(num / den);
  }
  double worst_scalar = 0, worst_dense = 0;
  int mismatches = 0;
  for (int i = 0; i < heads; ++i) {
    worst_scalar = std::max(worst_scalar, scalar_dev[i]);
    worst_dense = std::max(worst_dense, dense_dev[i]);
    mismatches += sparq_mismatch[i];
  }
  const double secs = seconds_since(t0);
  o.require(worst_scalar <= 1e-9, fmt("scalar oracle deviation %.3g", worst_scalar));
  o.require(mismatches == 0, fmt("%.0f heads differ from SparQ", mismatches));
  o.require(worst_dense <= 1e-6, fmt("full selection rel. error %.3g", worst_dense));
  o.require(secs < 60, fmt("took %.1f s", secs));
  if (o.ok)
    o.note = fmt("1000 heads, max dev %.2g vs scalar, %.2g rel vs dense, %.1f s", worst_scalar, worst_dense, secs);
  return o;
}

// 2. Group load + filter equals a direct gather: every mask for S <= 16;
//    for 16 < S <= 32 every mask of up to 2 indices, every contiguous run and
//    4000 random masks per S.
Outcome dual_step_exactness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<int> failures(33, 0);
  std::vector<std::size_t> counted(33, 0);
#pragma omp parallel for schedule(dynamic)
  for (int S = 1; S <= 32; ++S) {
    core::Matrix m(S, 2);
    for (int r = 0; r < S; ++r) {
      m(r, 0) = r;
      m(r, 1) = -r - 0.5;
    }
    std::vector<std::uint64_t> masks;
    if (S <= 16) {
      for (std::uint64_t b = 0; b < (1ULL << S); ++b) masks.push_back(b);
    } else {
      for (int a = 0; a < S; ++a)
        for (int b = a; b < S; ++b) {
          masks.push_back((1ULL << a) | (1ULL << b));
          masks.push_back(((1ULL << (b + 1)) - 1) & ~((1ULL << a) - 1));
        }
      std::mt19937_64 rng(S);
      for (int i = 0; i < 4000; ++i) masks.push_back(rng() & ((1ULL << S) - 1));
      masks.push_back(0);
    }
    for (std::uint64_t bits : masks) {
      core::SelectionMask mask{core::Axis::kToken, {}, static_cast<std::size_t>(S), 1};
      for (int i = 0; i < S; ++i)
        if (bits >> i & 1) mask.selected.push_back(i);
      const auto direct = oracle::direct_gather_rows(m, mask.selected);
      for (std::size_t g : {1, 2, 4, 8, 16}) {
        mask.group_size = g;
        const auto loaded = core::load_row_groups(m, core::group_expand(mask, g), g);
        failures[S] += !(core::filter_groups(loaded, mask) == direct);
        ++counted[S];
      }
    }
  }
  int fails = 0;
  std::size_t total = 0;
  for (int S = 1; S <= 32; ++S) {
    fails += failures[S];
    total += counted[S];
  }
  o.require(fails == 0, fmt("%.0f mismatches", fails));
  o.note = o.ok ? fmt("%.0f mask/group cases, %.1f s", double(total), seconds_since(t0)) : o.note;
  return o;
}

// 3. Page packing arithmetic.
Outcome layout_arithmetic() {
  Outcome o;
  o.require(layout::group_size_tokens(4096, 128, 2) == 16, "token group != 16");
  o.require(layout::embedding_stripe_tokens(4096, 1, 2) == 2048, "g=1 stripe != 2048");
  for (std::size_t g = 2; g <= 8; ++g) {
    const auto s = layout::embedding_stripe_tokens(4096, g, 2);
    o.require(s >= 256 && s <= 1024, fmt("g=%.0f stripe %.0f", double(g), double(s)));
  }
  if (o.ok) o.note = "16 tokens/page, 2048-token stripe at g=1, 256..1024 for g in [2,8]";
  return o;
}

// 4. KV bytes for OPT-13B.
Outcome kv_sizing() {
  Outcome o;
  const auto m = system::ModelSpec::opt_13b();
  const double a = system::kv_cache_bytes(m, 32, 4096), b = system::kv_cache_bytes(m, 128, 2048);
  o.require(std::abs(a / 100e9 - 1) <= 0.10, fmt("b=32,s=4096: %.4g B", a));
  o.require(std::abs(b / 200e9 - 1) <= 0.10, fmt("b=128,s=2048: %.4g B", b));
  if (o.ok) o.note = fmt("%.1f GB and %.1f GB", a / 1e9, b / 1e9);
  return o;
}

// 5. Streaming bandwidth of 8 channels and of 1.
Outcome flash_bandwidth() {
  Outcome o;
  const flash::FlashGeometry g;
  const flash::FlashTiming t;
  const double eight = flash::measure_bandwidth(flash::streaming_read(g, t, 8, 8192));
  const double one = flash::measure_bandwidth(flash::streaming_read(g, t, 1, 8192));
  o.require(std::abs(eight / 11.2e9 - 1) <= 0.02, fmt("8 channels: %.4g B/s", eight));
  o.require(std::abs(one / 1.4e9 - 1) <= 0.02, fmt("1 channel: %.4g B/s", one));
  if (o.ok) o.note = fmt("%.3f GB/s on 8 channels, %.3f GB/s on 1", eight / 1e9, one / 1e9);
  return o;
}

// 6. Read and write amplification.
Outcome amplification() {
  Outcome o;
  layout::LayoutConfig cfg;
  cfg.geometry.blocks_per_plane = 64;
  layout::KvLayout kv(cfg);
  const std::vector<double> row(cfg.head_dim, 1.0);
  for (int t = 0; t < 64; ++t) kv.append_token_kv(0, 0, row, row);
  kv.seal();
  std::vector<std::size_t> group;
  for (std::size_t t = 16; t < 32; ++t) group.push_back(t);
  const auto pages = kv.lookup_token_pages(0, 0, group, layout::KvTensor::kKey).pages;
  o.require(pages.size() == 1, fmt("token group read took %.0f pages", double(pages.size())));
  flash::FlashSimulator sim(cfg.geometry, {});
  const double grouped_bytes = static_cast<double>(sim.schedule_reads(pages).bytes());
  // A conventional FTL keeps each 256 B row in its own page.
  const std::size_t row_bytes = cfg.head_dim * cfg.element_bytes;
  const double naive_bytes =
      static_cast<double>(group.size() * ((row_bytes + cfg.geometry.page_size - 1) / cfg.geometry.page_size) *
                          cfg.geometry.page_size);
  o.require(naive_bytes / grouped_bytes == 16.0, fmt("read ratio %.2f", naive_bytes / grouped_bytes));

  const auto wa = layout::write_amplification_report({1, 1, 4096}, layout::LayoutConfig{});
  o.require(wa.grouped.write_amplification() <= 1.05, fmt("grouped WA %.4f", wa.grouped.write_amplification()));
  o.require(wa.naive.write_amplification() == 16.0, fmt("naive WA %.4f", wa.naive.write_amplification()));
  if (o.ok)
    o.note = fmt("1 page per group read, naive/grouped read %.0fx, WA %.3f vs %.0f", naive_bytes / grouped_bytes,
                 wa.grouped.write_amplification(), wa.naive.write_amplification());
  return o;
}

system::Scenario scenario(system::SystemKind kind, bool sparse, std::size_t batch, std::size_t csds = 1) {
  system::Scenario s;
  s.system = kind;
  s.workload = {batch, 1024, 1024};
  s.sparsity.sparse = sparse;
  s.sparsity.ratio = sparse ? 0.125 : 1.0;
  s.hardware.csd_count = csds;
  return s;
}

// 7. Baseline decode breakdown.
Outcome baseline_breakdown() {
  Outcome o;
  const auto big = system::simulate(scenario(system::SystemKind::kSsdOffload, false, 64));
  const auto small = system::simulate(scenario(system::SystemKind::kSsdOffload, false, 4));
  o.require(big.kv_share() >= 0.95, fmt("b=64 KV share %.4f", big.kv_share()));
  o.require(small.kv_cache_bytes + small.peak_vram_bytes > 0, "empty report");
  o.require(small.kv_share() <= 0.10, fmt("b=4 KV share %.4f", small.kv_share()));
  o.require(small.weight_share() > std::max({small.kv_share(), small.compute_share(), small.transfer_share()}),
            "weight access not dominant at b=4");
  if (o.ok)
    o.note = fmt("KV share %.2f%% at b=64; b=4 KV %.2f%%, weights %.2f%%", 100 * big.kv_share(),
                 100 * small.kv_share(), 100 * small.weight_share());
  return o;
}

// 8. Ordering, gain and KV-access reduction at large batch.
Outcome system_ordering() {
  using system::SystemKind;
  Outcome o;
  std::string summary;
  for (std::size_t b : {64, 128, 256}) {
    const auto sparf = system::simulate(scenario(SystemKind::kInstInfer, true, b));
    const auto dense = system::simulate(scenario(SystemKind::kInstInfer, false, b));
    const auto two = system::simulate(scenario(SystemKind::kInstInfer, false, b, 2));
    const auto sparq = system::simulate(scenario(SystemKind::kSsdOffload, true, b));
    const auto ssd = system::simulate(scenario(SystemKind::kSsdOffload, false, b));
    const double gain = sparf.throughput_tok_s / ssd.throughput_tok_s;
    const double reduction = 1 - dense.kv_access_s / ssd.kv_access_s;
    const double bd = static_cast<double>(b);
    o.require(gain >= 4, fmt("b=%.0f: gain %.2fx", bd, gain));
    o.require(sparf.throughput_tok_s > dense.throughput_tok_s && dense.throughput_tok_s > sparq.throughput_tok_s &&
                  sparq.throughput_tok_s > ssd.throughput_tok_s,
              fmt("b=%.0f: ordering violated", bd));
    o.require(ssd.kv_share() > dense.kv_share() && dense.kv_share() > two.kv_share(),
              fmt("b=%.0f: KV share %.3f/%.3f not decreasing", bd, dense.kv_share(), two.kv_share()));
    o.require(reduction >= 0.80, fmt("b=%.0f: KV-time reduction %.3f", bd, reduction));
    if (!summary.empty()) summary += ", ";
    summary += fmt("b=%.0f %.1fx (KV time -%.1f%%)", bd, gain, 100 * reduction);
  }
  if (o.ok) o.note = summary;
  return o;
}

// 9. CSD scaling 1..20.
Outcome csd_scaling() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::string summary;
  for (bool sparse : {false, true}) {
    std::vector<double> tput;
    for (std::size_t n = 1; n <= 20; ++n)
      tput.push_back(system::simulate(scenario(system::SystemKind::kInstInfer, sparse, 256, n)).throughput_tok_s);
    for (std::size_t n = 1; n < tput.size(); ++n)
      o.require(tput[n] >= tput[n - 1], fmt("decrease at %.0f CSDs", double(n + 1)));
    for (std::size_t n = 1; n + 1 < tput.size(); ++n)
      o.require(tput[n + 1] - tput[n] <= tput[n] - tput[n - 1] + 1e-9 * tput[n],
                fmt("not concave at %.0f CSDs", double(n + 1)));
    const double speedup = tput.back() / tput.front();
    const double lo = sparse ? 5 : 6, hi = sparse ? 10 : 12;
    o.require(speedup >= lo && speedup <= hi,
              std::string(sparse ? "sparse" : "dense") + fmt(" speedup %.2fx", speedup));
    summary += fmt(sparse ? ", sparse %.2fx" : "dense %.2fx", speedup);
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60, fmt("took %.1f s", secs));
  if (o.ok) o.note = summary + " at 20 CSDs";
  return o;
}

// 10. Presets are byte-identical across runs and thread counts.
Outcome determinism() {
  Outcome o;
  for (const auto& name : system::preset_names()) {
    const auto scenarios = system::preset_scenarios(name, 1234);
    const auto a = system::results_csv(system::run_sweep(scenarios));
    const auto b = system::results_csv(system::run_sweep(scenarios));
    const auto c = system::results_csv(system::run_sweep(scenarios, 1));
    o.require(a == b && a == c, name + " differs between runs");
  }
  if (o.ok) o.note = "4 presets, repeated and single-threaded runs identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"algorithm exactness", algorithm_exactness},
      {"dual-step loading exactness", dual_step_exactness},
      {"layout arithmetic", layout_arithmetic},
      {"KV cache sizing", kv_sizing},
      {"flash bandwidth ceiling", flash_bandwidth},
      {"read/write amplification", amplification},
      {"baseline breakdown trend", baseline_breakdown},
      {"system ordering and gains", system_ordering},
      {"multi-CSD scaling", csd_scaling},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.ok = false;
      r.note = std::string("threw: ") + e.what();
    }
    failed += !r.ok;
    std::printf("%s %2zu %s: %s\n", r.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), r.note.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
