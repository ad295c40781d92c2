#include "sparf/verify/checks.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "sparf/core/attention.hpp"
#include "sparf/core/kernels.hpp"
#include "sparf/core/test_vectors.hpp"
#include "sparf/engine/engine_model.hpp"
#include "sparf/engine/head_schedule.hpp"
#include "sparf/errors.hpp"
#include "sparf/flash/simulator.hpp"
#include "sparf/layout/kv_layout.hpp"
#include "sparf/oracle/scalar_sparf.hpp"
#include "sparf/system/scenario.hpp"
#include "sparf/system/sweep.hpp"

namespace sparf::verify {

namespace {

using core::HeadConfig;
using core::HeadTensors;

// A check body appends failure notes; an empty list means pass.
using Notes = std::vector<std::string>;

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

// Random head shapes cycling d_h in {16, 64, 128} and S in {32, 256, 1024}.
struct Case {
  HeadConfig cfg;
  std::uint64_t seed;
};

std::vector<Case> random_cases(std::uint64_t seed, std::size_t count, std::size_t m,
                               std::size_t n) {
  static const std::size_t dims[] = {16, 64, 128};
  static const std::size_t lens[] = {32, 256, 1024};
  std::mt19937_64 rng(seed);
  std::vector<Case> out;
  for (std::size_t i = 0; i < count; ++i) {
    HeadConfig c;
    c.head_dim = dims[i % 3];
    c.seq_len = lens[(i / 3) % 3];
    c.kept_embeddings = 1 + rng() % c.head_dim;
    c.kept_tokens = 1 + rng() % c.seq_len;
    c.embedding_group = std::min(m, c.head_dim);
    c.token_group = n;
    out.push_back({c, rng()});
  }
  return out;
}

// Runs `body` over indices in parallel, gathering notes in index order.
Notes parallel_notes(std::size_t count, int threads,
                     const std::function<void(std::size_t, Notes&)>& body) {
  std::vector<Notes> per(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(team)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i), per[i]);
    } catch (const std::exception& e) {
      per[i].push_back(std::string("case ") + std::to_string(i) + " threw: " + e.what());
    }
  }
  Notes all;
  for (auto& p : per) all.insert(all.end(), p.begin(), p.end());
  return all;
}

// ---- sparse attention -------------------------------------------------------

Notes check_scalar_oracle(const VerifyOptions& o, std::size_t m, std::size_t n) {
  const auto cases = random_cases(o.seed, o.heads, m, n);
  core::SparfOptions opts;
  opts.temperature_scale = o.temperature_scale;
  return parallel_notes(cases.size(), o.threads, [&](std::size_t i, Notes& notes) {
    const auto& c = cases[i];
    const auto t = core::random_head(c.cfg.head_dim, c.cfg.seq_len, c.seed);
    const auto got = core::sparf_attention(t, c.cfg, opts);
    const auto ref = oracle::scalar_sparf(t, c.cfg.kept_embeddings, c.cfg.kept_tokens,
                                          c.cfg.embedding_group, c.cfg.token_group);
    const double d = max_abs_diff(got.out, ref.out);
    if (!(d <= 1e-9) || std::abs(got.alpha - ref.alpha) > 1e-9 ||
        got.tokens.selected != ref.tokens || got.embeddings.selected != ref.embeddings)
      notes.push_back(fmt("case %.0f: max |sparf - scalar| = %.3g", double(i), d));
  });
}

Notes check_sparq_equivalence(const VerifyOptions& o) {
  const auto cases = random_cases(o.seed + 1, o.heads, 1, 1);
  core::SparfOptions opts;
  opts.temperature_scale = o.temperature_scale;
  return parallel_notes(cases.size(), o.threads, [&](std::size_t i, Notes& notes) {
    const auto& c = cases[i];
    const auto t = core::random_head(c.cfg.head_dim, c.cfg.seq_len, c.seed);
    const auto a = core::sparf_attention(t, c.cfg, opts);
    const auto b = core::sparq_attention(t, c.cfg.kept_embeddings, c.cfg.kept_tokens);
    if (a.out != b.out || a.alpha != b.alpha)
      notes.push_back(fmt("case %.0f: sparf(m=n=1) differs from sparq by %.3g", double(i),
                          max_abs_diff(a.out, b.out)));
  });
}

Notes check_group_invariance(const VerifyOptions& o) {
  const auto cases = random_cases(o.seed + 2, o.heads, 1, 1);
  static const std::size_t groups[] = {2, 4, 8, 16};
  return parallel_notes(cases.size(), o.threads, [&](std::size_t i, Notes& notes) {
    const auto& c = cases[i];
    const auto t = core::random_head(c.cfg.head_dim, c.cfg.seq_len, c.seed);
    const auto base = core::sparf_attention(t, c.cfg);
    for (std::size_t g : groups) {
      HeadConfig cfg = c.cfg;
      cfg.embedding_group = std::min(g, cfg.head_dim);
      cfg.token_group = g;
      if (core::sparf_attention(t, cfg).out != base.out)
        notes.push_back(fmt("case %.0f: output changes with group %.0f", double(i), double(g)));
    }
  });
}

Notes check_full_selection(const VerifyOptions& o) {
  const auto cases = random_cases(o.seed + 3, o.heads, 8, 16);
  core::SparfOptions opts;
  opts.temperature_scale = o.temperature_scale;
  return parallel_notes(cases.size(), o.threads, [&](std::size_t i, Notes& notes) {
    HeadConfig cfg = cases[i].cfg;
    cfg.kept_embeddings = cfg.head_dim;
    cfg.kept_tokens = cfg.seq_len;
    const auto t = core::random_head(cfg.head_dim, cfg.seq_len, cases[i].seed);
    const auto got = core::sparf_attention(t, cfg, opts);
    const double e = rel_l2(got.out, core::dense_attention(t));
    if (!(e <= 1e-6) || std::abs(got.alpha - 1.0) > 1e-6)
      notes.push_back(fmt("case %.0f: relative error vs dense %.3g, alpha %.9g", double(i), e,
                          got.alpha));
    if (got.row_trace.bytes_over_channel != got.row_trace.dense_bytes)
      notes.push_back(fmt("case %.0f: full-selection row trace is not dense", double(i)));
  });
}

Notes check_normalization_and_traces(const VerifyOptions& o) {
  const auto cases = random_cases(o.seed + 4, o.heads, 8, 16);
  return parallel_notes(cases.size(), o.threads, [&](std::size_t i, Notes& notes) {
    const auto& c = cases[i];
    const auto t = core::random_head(c.cfg.head_dim, c.cfg.seq_len, c.seed);
    const auto r = core::sparf_attention(t, c.cfg);
    double sum = 0;
    for (double s : r.approx_scores) sum += s;
    if (std::abs(sum - 1.0) > 1e-6) notes.push_back(fmt("case %.0f: scores sum to %.12g", double(i), sum));
    if (!(r.alpha >= 0.0 && r.alpha <= 1.0))
      notes.push_back(fmt("case %.0f: alpha %.12g outside [0,1]", double(i), r.alpha));
    for (const auto* tr : {&r.column_trace, &r.row_trace})
      if (!(tr->bytes_after_filter <= tr->bytes_over_channel &&
            tr->bytes_over_channel <= tr->dense_bytes))
        notes.push_back(fmt("case %.0f: trace ordering violated", double(i)));
    const auto again = core::sparf_attention(t, c.cfg);
    if (again.out != r.out || again.approx_scores != r.approx_scores ||
        !(again.row_trace == r.row_trace) || !(again.column_trace == r.column_trace))
      notes.push_back(fmt("case %.0f: repeated call is not bitwise identical", double(i)));
  });
}

// Every mask over S <= 12 tokens, plus 64 random masks for each larger S <= 32.
Notes check_dual_step(const VerifyOptions& o) {
  Notes notes;
  std::mt19937_64 rng(o.seed + 5);
  const std::size_t width = 3;
  for (std::size_t S = 1; S <= 32; ++S) {
    core::Matrix m(S, width);
    for (std::size_t r = 0; r < S; ++r)
      for (std::size_t c = 0; c < width; ++c) m(r, c) = static_cast<double>(r * 10 + c);
    std::vector<std::uint64_t> masks;
    if (S <= 12) {
      for (std::uint64_t bits = 0; bits < (1ULL << S); ++bits) masks.push_back(bits);
    } else {
      for (int i = 0; i < 64; ++i) masks.push_back(rng() & ((1ULL << S) - 1));
      masks.push_back((1ULL << S) - 1);
    }
    for (std::uint64_t bits : masks) {
      core::SelectionMask mask;
      mask.axis = core::Axis::kToken;
      mask.extent = S;
      for (std::size_t i = 0; i < S; ++i)
        if (bits >> i & 1) mask.selected.push_back(i);
      const auto direct = oracle::direct_gather_rows(m, mask.selected);
      for (std::size_t g : {1, 2, 4, 8, 16}) {
        mask.group_size = g;
        const auto ids = core::group_expand(mask, g);
        const auto loaded = core::load_row_groups(m, ids, g);
        if (!(core::filter_groups(loaded, mask) == direct)) {
          notes.push_back(fmt("S=%.0f group=%.0f mask=%.0f: filtered load differs from gather",
                              double(S), double(g), double(bits)));
          return notes;
        }
      }
    }
  }
  return notes;
}

Notes check_kernels(const VerifyOptions& o) {
  Notes notes;
  std::mt19937_64 rng(o.seed + 6);
  std::normal_distribution<double> nd;
  for (std::size_t rows : {1, 7, 1024, 8191}) {
    core::Matrix m(rows, 128);
    for (auto& v : m.data()) v = nd(rng);
    std::vector<double> q(128), w(rows);
    for (auto& v : q) v = nd(rng);
    for (auto& v : w) v = nd(rng);
    std::vector<double> a(rows), b(rows), c(128), d(128);
    core::kernels::row_logits_serial(q, m, 0.125, a);
    core::kernels::row_logits_parallel(q, m, 0.125, b);
    core::kernels::weighted_row_sum_serial(w, m, c);
    core::kernels::weighted_row_sum_parallel(w, m, d);
    if (a != b) notes.push_back(fmt("row_logits: parallel differs from serial at %.0f rows", double(rows)));
    if (c != d) notes.push_back(fmt("weighted_row_sum: parallel differs from serial at %.0f rows", double(rows)));
  }
  return notes;
}

Notes check_vectors(const VerifyOptions& o) {
  Notes notes;
  std::ifstream in(o.vectors_path);
  if (!in) return {"cannot open " + o.vectors_path};
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& v : core::parse_test_vectors(ss.str())) {
    const double d = max_abs_diff(v.evaluate(), v.expected);
    if (!(d <= v.tolerance)) notes.push_back(v.name + ": " + fmt("deviation %.3g", d));
  }
  return notes;
}

// ---- layout -----------------------------------------------------------------

layout::LayoutConfig small_layout(std::size_t heads) {
  layout::LayoutConfig c;
  c.geometry.channels = 8;
  c.geometry.dies_per_channel = 2;
  c.geometry.blocks_per_plane = 64;
  c.geometry.pages_per_block = 16;
  c.layers = 1;
  c.heads = heads;
  c.head_dim = 128;
  c.embedding_group = 8;
  return c;
}

Notes check_layout_arithmetic(const VerifyOptions&) {
  Notes notes;
  if (layout::group_size_tokens(4096, 128, 2) != 16) notes.push_back("group_size_tokens(4096,128,2) != 16");
  if (layout::embedding_stripe_tokens(4096, 1, 2) != 2048) notes.push_back("embedding_stripe_tokens(4096,1,2) != 2048");
  for (std::size_t g = 2; g <= 8; ++g) {
    const auto s = layout::embedding_stripe_tokens(4096, g, 2);
    if (s < 256 || s > 1024) notes.push_back(fmt("stripe for g=%.0f is %.0f tokens", double(g), double(s)));
  }
  return notes;
}

Notes check_layout_round_trip(const VerifyOptions& o) {
  std::vector<std::size_t> lens;
  for (std::size_t s = 1; s <= 512; s += (s < 40 ? 1 : 23)) lens.push_back(s);
  lens.push_back(512);
  return parallel_notes(lens.size(), o.threads, [&](std::size_t i, Notes& notes) {
    const std::size_t S = lens[i];
    const std::size_t heads = 1 + i % 4;
    layout::KvLayout kv(small_layout(heads));
    std::vector<core::HeadTensors> ref;
    for (std::size_t h = 0; h < heads; ++h) ref.push_back(core::random_head(128, S, o.seed + 100 * S + h));
    for (std::size_t t = 0; t < S; ++t)
      for (std::size_t h = 0; h < heads; ++h) kv.append_token_kv(0, h, ref[h].keys.row(t), ref[h].values.row(t));
    std::vector<std::size_t> tokens(S), dims(128);
    for (std::size_t t = 0; t < S; ++t) tokens[t] = t;
    for (std::size_t d = 0; d < 128; ++d) dims[d] = d;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t h = 0; h < heads; ++h) {
        if (!(kv.gather_rows(0, h, layout::KvTensor::kKey, tokens) == ref[h].keys) ||
            !(kv.gather_rows(0, h, layout::KvTensor::kValue, tokens) == ref[h].values) ||
            !(kv.gather_columns(0, h, dims, 0, S) == ref[h].keys.transposed()))
          notes.push_back(fmt("S=%.0f head=%.0f pass=%.0f: gathered data differs", double(S), double(h), pass));
      }
      if (pass == 0) kv.seal();
    }
    // Sealing writes the last partial group and stripes as whole pages; that
    // slack stays below one page per open group or stripe.
    const auto dup = kv.duplication_stats();
    const auto& cfg = kv.config();
    const std::size_t page = cfg.geometry.page_size;
    const bool aligned = S % cfg.stripe_tokens() == 0;
    const std::size_t k_slack = aligned ? 0 : heads * (1 + cfg.embedding_groups()) * page;
    const std::size_t v_slack = aligned ? 0 : heads * page;
    if (dup.key_physical_bytes < 2 * dup.key_logical_bytes ||
        dup.key_physical_bytes - 2 * dup.key_logical_bytes > k_slack ||
        dup.value_physical_bytes < dup.value_logical_bytes ||
        dup.value_physical_bytes - dup.value_logical_bytes > v_slack)
      notes.push_back(fmt("S=%.0f: physical K/V bytes are not 2x/1x logical", double(S)));
  });
}

Notes check_layout_buffered_duplication(const VerifyOptions& o) {
  Notes notes;
  auto cfg = small_layout(4);
  layout::KvLayout kv(cfg);
  const auto t = core::random_head(128, 700, o.seed + 7);
  for (std::size_t s = 0; s < 700; ++s)
    for (std::size_t h = 0; h < 4; ++h) kv.append_token_kv(0, h, t.keys.row(s), t.values.row(s));
  kv.flush_pending(true);
  const auto d = kv.duplication_stats();
  const std::size_t group_bytes = cfg.token_group() * cfg.head_dim * cfg.element_bytes;
  const std::size_t flushed_key = d.key_logical_bytes - d.key_buffered_bytes;
  const std::size_t flushed_value = d.value_logical_bytes - d.value_buffered_bytes;
  if (d.value_physical_bytes != flushed_value) notes.push_back("V physical bytes differ from flushed V bytes");
  if (d.key_physical_bytes < flushed_value || d.key_physical_bytes > 2 * flushed_key)
    notes.push_back("K physical bytes outside [1x, 2x] of flushed K");
  if (d.value_buffered_bytes >= 4 * group_bytes) notes.push_back("V buffer slack is a full group per head or more");
  return notes;
}

Notes check_channel_balance(const VerifyOptions& o) {
  Notes notes;
  auto cfg = small_layout(3);
  cfg.geometry.blocks_per_plane = 256;
  layout::KvLayout kv(cfg);
  const std::size_t S = 2048;
  const std::vector<double> row(128, 0.5);
  for (std::size_t t = 0; t < S; ++t)
    for (std::size_t h = 0; h < 3; ++h) kv.append_token_kv(0, h, row, row);
  kv.seal();
  const std::size_t C = cfg.geometry.channels, n = cfg.token_group(), groups = S / n;
  auto spread_ok = [&](const std::vector<layout::PhysicalPageAddress>& pages) {
    std::vector<std::size_t> hist(C, 0);
    for (const auto& p : pages) ++hist[p.channel];
    const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
    return *hi - *lo <= 1;
  };
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t start = 0; start < groups; start += 5)
      for (std::size_t G = C; start + G <= groups; G += 3) {
        std::vector<std::size_t> tokens;
        for (std::size_t g = start; g < start + G; ++g) tokens.push_back(g * n);
        for (auto tensor : {layout::KvTensor::kKey, layout::KvTensor::kValue})
          if (!spread_ok(kv.lookup_token_pages(0, h, tokens, tensor).pages))
            notes.push_back(fmt("head %.0f groups [%.0f,+%.0f): channel counts differ by > 1", double(h),
                                double(start), double(G)));
      }
  // Consecutive stripes of one embedding group.
  const std::size_t stripe = cfg.stripe_tokens();
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t e = 0; e < 128; e += cfg.embedding_group) {
      const std::size_t emb[] = {e};
      if (!spread_ok(kv.lookup_embedding_pages(0, h, emb, 0, C * stripe).pages))
        notes.push_back(fmt("head %.0f embedding %.0f: stripe channels unbalanced", double(h), double(e)));
    }
  (void)o;
  return notes;
}

Notes check_read_granularity(const VerifyOptions& o) {
  Notes notes;
  auto cfg = small_layout(2);
  layout::KvLayout kv(cfg);
  const std::vector<double> row(128, 1.0);
  for (std::size_t t = 0; t < 1024; ++t)
    for (std::size_t h = 0; h < 2; ++h) kv.append_token_kv(0, h, row, row);
  kv.seal();
  std::mt19937_64 rng(o.seed + 8);
  flash::FlashSimulator sim(cfg.geometry, {});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> tokens;
    for (std::size_t t = 0; t < 1024; ++t)
      if (rng() % 7 == 0) tokens.push_back(t);
    const std::size_t dims[] = {3, 40, 127};
    auto pages = kv.lookup_token_pages(0, trial % 2, tokens, layout::KvTensor::kKey).pages;
    const auto cols = kv.lookup_embedding_pages(0, trial % 2, dims, 0, 1024).pages;
    pages.insert(pages.end(), cols.begin(), cols.end());
    const auto tl = sim.schedule_reads(pages);
    if (tl.bytes() != pages.size() * cfg.geometry.page_size || tl.page_size != cfg.geometry.page_size)
      notes.push_back("a lookup read moved other than whole pages");
  }
  const std::size_t first_group[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  const auto one = kv.lookup_token_pages(0, 0, first_group, layout::KvTensor::kKey);
  if (one.pages.size() != 1) notes.push_back("one token group did not map to exactly 1 page");
  // Reading the same 16 tokens at 256 B per page takes one page per token.
  const std::size_t naive_bytes = std::size(first_group) * cfg.geometry.page_size;
  if (naive_bytes != 16 * one.pages.size() * cfg.geometry.page_size)
    notes.push_back("naive/grouped read ratio is not 16");
  return notes;
}

Notes check_write_amplification(const VerifyOptions&) {
  Notes notes;
  layout::LayoutConfig cfg;
  cfg.head_dim = 128;
  for (std::size_t heads : {1, 40}) {
    const auto r = layout::write_amplification_report({1, heads, 4096}, cfg);
    const double wa = r.grouped.write_amplification();
    const double open_blocks = static_cast<double>(cfg.geometry.dies());
    const double bound = 1.0 + open_blocks * static_cast<double>(cfg.geometry.block_bytes()) /
                                   static_cast<double>(r.grouped.logical_bytes);
    if (!(wa <= 1.05)) notes.push_back(fmt("grouped WA %.4f > 1.05 (heads %.0f)", wa, double(heads)));
    if (!(wa <= bound)) notes.push_back(fmt("grouped WA %.4f above open-block bound %.4f", wa, bound));
    if (r.naive.write_amplification() != 16.0)
      notes.push_back(fmt("naive WA %.4f != 16", r.naive.write_amplification()));
  }
  if (layout::WriteStats{}.write_amplification() != 1.0) notes.push_back("empty WA is not 1");
  return notes;
}

// ---- flash ------------------------------------------------------------------

// No channel idles while a read's page is ready to cross it.
Notes work_conservation(const flash::EventTimeline& tl, const flash::FlashTiming& t,
                        const flash::FlashGeometry& g) {
  Notes notes;
  std::vector<std::vector<std::pair<double, double>>> busy(g.channels);
  for (const auto& c : tl.commands)
    if (c.kind != flash::CommandKind::kErase) busy[c.address.channel].push_back({c.transfer_start_us, c.transfer_end_us});
  for (auto& b : busy) std::sort(b.begin(), b.end());
  const double eps = 1e-6;
  for (const auto& c : tl.commands) {
    if (c.kind != flash::CommandKind::kRead) continue;
    double ready = c.die_start_us + t.t_read_page_us;
    if (c.transfer_start_us <= ready + eps) continue;
    // [ready, transfer_start) must be covered by other transfers.
    for (const auto& [s, e] : busy[c.address.channel]) {
      if (s > ready + eps) break;
      ready = std::max(ready, e);
    }
    if (ready + eps < c.transfer_start_us) {
      notes.push_back(fmt("channel %.0f idle at %.3f us while a read waited", double(c.address.channel), ready));
      break;
    }
  }
  return notes;
}

std::vector<flash::FlashCommand> random_commands(const flash::FlashGeometry& g, std::mt19937_64& rng,
                                                 std::size_t count) {
  std::vector<flash::FlashCommand> cmds;
  std::vector<std::size_t> next_page(g.dies() * 4, 0);
  for (std::size_t i = 0; i < count; ++i) {
    flash::FlashCommand c;
    c.address.channel = static_cast<std::uint32_t>(rng() % g.channels);
    c.address.die = static_cast<std::uint32_t>(rng() % g.dies_per_channel);
    c.address.block = static_cast<std::uint32_t>(rng() % 4);
    c.issue_us = static_cast<double>(rng() % 2000);
    const auto roll = rng() % 10;
    const std::size_t slot = c.address.die_index(g) * 4 + c.address.block;
    if (roll < 2 && next_page[slot] < g.pages_per_block) {
      c.kind = flash::CommandKind::kProgram;
      c.address.page = static_cast<std::uint32_t>(next_page[slot]++);
    } else {
      c.kind = flash::CommandKind::kRead;
      c.address.page = static_cast<std::uint32_t>(rng() % g.pages_per_block);
    }
    cmds.push_back(c);
  }
  return cmds;
}

Notes check_flash_bandwidth(const VerifyOptions&) {
  Notes notes;
  flash::FlashGeometry g;
  flash::FlashTiming t;
  const double eight = flash::measure_bandwidth(flash::streaming_read(g, t, 8, 4096));
  const double one = flash::measure_bandwidth(flash::streaming_read(g, t, 1, 4096));
  if (std::abs(eight / 11.2e9 - 1) > 0.02) notes.push_back(fmt("8-channel stream %.4g B/s", eight));
  if (std::abs(one / 1.4e9 - 1) > 0.02) notes.push_back(fmt("1-channel stream %.4g B/s", one));
  if (eight > 8 * t.channel_bandwidth * (1 + 1e-12)) notes.push_back("bandwidth above channel ceiling");
  flash::FlashSimulator sim(g, t);
  const layout::PhysicalPageAddress a{};
  const auto single = sim.schedule_reads(std::span(&a, 1));
  const double expect = t.command_overhead_us + t.t_read_page_us + t.transfer_us(g.page_size);
  if (std::abs(single.makespan_us() - expect) > 1e-9)
    notes.push_back(fmt("single read %.4f us, expected %.4f", single.makespan_us(), expect));
  return notes;
}

Notes check_flash_timeline(const VerifyOptions& o) {
  Notes notes;
  flash::FlashGeometry g;
  g.channels = 4;
  g.dies_per_channel = 4;
  g.blocks_per_plane = 8;
  g.pages_per_block = 64;
  flash::FlashTiming t;
  std::mt19937_64 rng(o.seed + 9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cmds = random_commands(g, rng, 300);
    flash::FlashSimulator sim(g, t);
    const auto tl = sim.schedule(cmds);
    try {
      tl.check_invariants(g);
    } catch (const std::exception& e) {
      notes.push_back(std::string("trial timeline: ") + e.what());
    }
    double busy = 0;
    for (std::size_t c = 0; c < g.channels; ++c) busy += tl.channel_busy_us(c);
    if (busy + 1e-6 < static_cast<double>(tl.bytes()) / t.channel_bandwidth * 1e6)
      notes.push_back("channel busy time below bytes / bandwidth");
    for (const auto& n : work_conservation(tl, t, g)) notes.push_back(n);

    flash::FlashSimulator again(g, t);
    if (again.schedule(cmds).to_csv() != tl.to_csv()) notes.push_back("same commands gave a different timeline");

    flash::FlashSimulator prefix(g, t);
    const auto part = prefix.schedule(std::span(cmds).first(cmds.size() / 2));
    if (part.makespan_us() > tl.makespan_us() + 1e-9) notes.push_back("adding commands decreased the makespan");
  }
  flash::FlashSimulator sim(g, t);
  const layout::PhysicalPageAddress a{};
  sim.schedule_programs(std::span(&a, 1));
  try {
    sim.schedule_programs(std::span(&a, 1));
    notes.push_back("reprogramming a page was accepted");
  } catch (const InvariantError&) {
  }
  return notes;
}

// ---- engine -----------------------------------------------------------------

Notes check_engine(const VerifyOptions& o) {
  Notes notes;
  const engine::EngineConfig cfg;
  const flash::FlashGeometry g;
  const flash::FlashTiming t;
  const auto load = engine::make_load_model(g, t, cfg);
  if (engine::gemv_cycles(128 * 128, 768) != 22) notes.push_back("GeMV 128x128 on 768 MACs is not 22 cycles");

  HeadConfig hc{128, 1024, 128, 1024, 8, 16, 2};
  const auto head = core::random_head(128, 1024, o.seed + 10);
  const auto full = engine::HeadWork::from_result(hc, core::sparf_attention(head, hc));
  const std::size_t k_bytes = 1024 * 128 * 2;
  if (full.loaded_bytes() != 3 * k_bytes)
    notes.push_back(fmt("full selection loads %.0f bytes, expected %.0f", double(full.loaded_bytes()), 3.0 * k_bytes));
  for (auto [r, k] : {std::pair<std::size_t, std::size_t>{16, 1024}, {128, 128}, {16, 128}}) {
    HeadConfig sc = hc;
    sc.kept_embeddings = r;
    sc.kept_tokens = k;
    const auto w = engine::HeadWork::from_result(sc, core::sparf_attention(head, sc));
    if (!(w.loaded_bytes() < full.loaded_bytes()))
      notes.push_back(fmt("r=%.0f k=%.0f does not load less than dense", double(r), double(k)));
  }

  const auto sparse = engine::HeadWork::expected(128, 1024, 16, 128, 16, 8, 4096, 0.5);
  const double cycle_us = cfg.cycles_to_us(1);
  for (const auto& w : {full, sparse, engine::HeadWork::dense(128, 1024, 16, 4096)}) {
    const auto b = engine::stage_latencies(cfg, w, load);
    double sum = 0;
    for (const auto& s : b.critical_path) {
      if (s.us < 0) notes.push_back("negative critical-path segment");
      sum += s.us;
    }
    if (std::abs(sum - b.total_us) > cycle_us) notes.push_back(fmt("critical path sums to %.6f, total %.6f", sum, b.total_us));

    const engine::HeadWork one[] = {w};
    const auto s1 = engine::head_schedule(cfg, one, load);
    if (std::abs(s1.makespan_us - b.total_us) > 1e-6)
      notes.push_back(fmt("single-head schedule %.4f vs critical path %.4f", s1.makespan_us, b.total_us));
    const engine::HeadWork two[] = {w, w};
    if (!(engine::head_schedule(cfg, two, load).makespan_us < 2 * b.total_us))
      notes.push_back("two heads do not overlap");

    const std::vector<engine::HeadWork> many(40, w);
    const auto sched = engine::head_schedule(cfg, many, load);
    const double rate = 40.0 / (sched.makespan_us * 1e-6);
    const auto bounds = engine::throughput_bounds(cfg, w, load);
    if (rate > bounds.bound() * (1 + 1e-9))
      notes.push_back(fmt("schedule rate %.4g heads/s above bound %.4g", rate, bounds.bound()));
    if (sched.flash_busy_us > sched.makespan_us + 1e-9 || sched.argtopk_busy_us > sched.makespan_us + 1e-9)
      notes.push_back("resource busy longer than the makespan");
    for (double k : sched.kernel_busy_us)
      if (k > sched.makespan_us + 1e-9) notes.push_back("kernel busy longer than the makespan");
    const double closed = engine::pipelined_makespan_us(cfg, w, load, 40);
    if (std::abs(closed / sched.makespan_us - 1) > 0.25)
      notes.push_back(fmt("closed-form makespan %.2f far from simulated %.2f", closed, sched.makespan_us));
  }
  return notes;
}

// ---- system -----------------------------------------------------------------

system::Scenario scenario(system::SystemKind kind, bool sparse, std::size_t batch,
                          std::size_t csds = 1, std::size_t ssds = 1) {
  system::Scenario s;
  s.system = kind;
  s.workload = {batch, 1024, 1024};
  s.sparsity.sparse = sparse;
  s.sparsity.ratio = sparse ? 0.125 : 1.0;
  s.hardware.csd_count = csds;
  s.hardware.ssd_count = ssds;
  return s;
}

Notes check_system_sizing(const VerifyOptions&) {
  Notes notes;
  const auto m = system::ModelSpec::opt_13b();
  if (std::abs(system::kv_cache_bytes(m, 32, 4096) / 100e9 - 1) > 0.10) notes.push_back("b=32,s=4096 KV not within 10% of 100 GB");
  if (std::abs(system::kv_cache_bytes(m, 128, 2048) / 200e9 - 1) > 0.10) notes.push_back("b=128,s=2048 KV not within 10% of 200 GB");
  if (system::kv_cache_bytes(m, 1, 1) != 819200.0) notes.push_back("per-token KV is not 819200 bytes");
  return notes;
}

Notes check_system_trends(const VerifyOptions& o) {
  using system::SystemKind;
  Notes notes;
  std::vector<system::Scenario> grid;
  for (std::size_t b : {64, 128, 256}) {
    grid.push_back(scenario(SystemKind::kInstInfer, true, b));
    grid.push_back(scenario(SystemKind::kInstInfer, false, b));
    grid.push_back(scenario(SystemKind::kSsdOffload, true, b));
    grid.push_back(scenario(SystemKind::kSsdOffload, false, b));
    grid.push_back(scenario(SystemKind::kInstInfer, false, b, 2));
  }
  for (std::size_t n = 1; n <= 20; ++n) {
    grid.push_back(scenario(SystemKind::kInstInfer, false, 256, n));
    grid.push_back(scenario(SystemKind::kInstInfer, true, 256, n));
  }
  for (auto kind : {SystemKind::kSsdOffload, SystemKind::kHostOffload})
    for (std::size_t n : {1, 4}) grid.push_back(scenario(kind, false, 256, 1, n));
  grid.push_back(scenario(SystemKind::kSsdOffload, false, 4));
  grid.push_back(scenario(SystemKind::kHostOffload, false, 64));
  grid.push_back(scenario(SystemKind::kHostOffload, false, 128));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].id = "check-" + std::to_string(i);
  const auto rows = system::run_sweep(grid, o.threads);
  auto rep = [&](std::size_t i) -> const system::ScenarioReport& { return rows[i].report; };

  for (std::size_t bi = 0; bi < 3; ++bi) {
    const auto &sparf = rep(bi * 5), &dense = rep(bi * 5 + 1), &sparq = rep(bi * 5 + 2),
               &ssd = rep(bi * 5 + 3), &two = rep(bi * 5 + 4);
    const double b = static_cast<double>(grid[bi * 5].workload.batch);
    if (!(sparf.throughput_tok_s > dense.throughput_tok_s && dense.throughput_tok_s > sparq.throughput_tok_s &&
          sparq.throughput_tok_s > ssd.throughput_tok_s))
      notes.push_back(fmt("b=%.0f: throughput ordering violated", b));
    if (!(sparf.throughput_tok_s >= 4 * ssd.throughput_tok_s))
      notes.push_back(fmt("b=%.0f: SparF gain %.2fx < 4x", b, sparf.throughput_tok_s / ssd.throughput_tok_s));
    if (!(ssd.kv_share() > dense.kv_share() && dense.kv_share() > two.kv_share()))
      notes.push_back(fmt("b=%.0f: KV share not decreasing across systems", b));
    if (!(dense.kv_access_s <= 0.2 * ssd.kv_access_s))
      notes.push_back(fmt("b=%.0f: KV-time reduction %.3f < 0.8", b, 1 - dense.kv_access_s / ssd.kv_access_s));
    if (bi == 0 && !(ssd.kv_share() >= 0.95)) notes.push_back(fmt("ssd-offload b=64 KV share %.4f < 0.95", ssd.kv_share()));
  }

  const std::size_t scale0 = 15;
  for (int sparse = 0; sparse < 2; ++sparse) {
    std::vector<double> tput;
    for (std::size_t n = 0; n < 20; ++n) tput.push_back(rep(scale0 + 2 * n + sparse).throughput_tok_s);
    for (std::size_t n = 1; n < 20; ++n)
      if (tput[n] < tput[n - 1]) notes.push_back(fmt("scaling decreases at %.0f CSDs", double(n + 1)));
    for (std::size_t n = 1; n + 1 < 20; ++n)
      if (tput[n + 1] - tput[n] > tput[n] - tput[n - 1] + 1e-9 * tput[n])
        notes.push_back(fmt("scaling not concave at %.0f CSDs", double(n + 1)));
    const double speedup = tput[19] / tput[0];
    const double lo = sparse ? 5 : 6, hi = sparse ? 10 : 12;
    if (speedup < lo || speedup > hi)
      notes.push_back(fmt("20-CSD speedup %.2f outside [%.0f, %.0f]", speedup, lo, hi));
  }

  const std::size_t base0 = scale0 + 40;
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = rep(base0 + 2 * k).throughput_tok_s, b = rep(base0 + 2 * k + 1).throughput_tok_s;
    if (std::abs(b / a - 1) >= 0.05) notes.push_back(fmt("baseline changes %.3f with 4 SSDs", b / a - 1));
  }
  const auto& small = rep(base0 + 4);
  if (!(small.kv_share() <= 0.10 && small.weight_share() > 0.5))
    notes.push_back(fmt("b=4: KV share %.3f, weight share %.3f", small.kv_share(), small.weight_share()));
  if (!(rep(base0 + 6).throughput_tok_s * 10 < rep(base0 + 5).throughput_tok_s))
    notes.push_back("host-offload spilling past host memory does not collapse throughput by > 10x");

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rep(i);
    for (double v : {r.prefill_s, r.decode_total_s, r.weight_access_s, r.kv_access_s, r.compute_s, r.transfer_s})
      if (!(v >= 0)) notes.push_back(grid[i].id + ": negative duration");
    for (double v : {r.weight_access_s, r.kv_access_s, r.compute_s, r.transfer_s})
      if (v > r.decode_total_s * (1 + 1e-9)) notes.push_back(grid[i].id + ": a resource is busier than decode time");
    const double shares = r.weight_share() + r.kv_share() + r.compute_share() + r.transfer_share();
    if (std::abs(shares - 1) > 1e-9) notes.push_back(grid[i].id + ": shares do not sum to 1");
    const double gen = static_cast<double>(grid[i].workload.batch * grid[i].workload.s_out);
    if (std::abs(r.throughput_tok_s * (r.prefill_s + r.decode_total_s) / gen - 1) > 1e-9)
      notes.push_back(grid[i].id + ": throughput is not tokens / time");
  }
  return notes;
}

Notes check_determinism(const VerifyOptions& o) {
  Notes notes;
  for (const auto& name : system::preset_names()) {
    const auto s = system::preset_scenarios(name, o.seed);
    if (system::results_csv(system::run_sweep(s, o.threads)) != system::results_csv(system::run_sweep(s, 1)))
      notes.push_back(name + ": two runs differ");
  }
  return notes;
}

}  // namespace

std::vector<CheckResult> run_verify(const VerifyOptions& o) {
  const std::vector<std::pair<std::string, std::function<Notes()>>> suite = {
      {"attention.scalar-oracle", [&] { return check_scalar_oracle(o, 1, 1); }},
      {"attention.scalar-oracle-grouped", [&] { return check_scalar_oracle(o, 8, 16); }},
      {"attention.sparq-equivalence", [&] { return check_sparq_equivalence(o); }},
      {"attention.group-invariance", [&] { return check_group_invariance(o); }},
      {"attention.full-selection", [&] { return check_full_selection(o); }},
      {"attention.normalization-traces", [&] { return check_normalization_and_traces(o); }},
      {"attention.dual-step", [&] { return check_dual_step(o); }},
      {"attention.kernels-serial-parallel", [&] { return check_kernels(o); }},
      {"layout.arithmetic", [&] { return check_layout_arithmetic(o); }},
      {"layout.round-trip", [&] { return check_layout_round_trip(o); }},
      {"layout.buffered-duplication", [&] { return check_layout_buffered_duplication(o); }},
      {"layout.channel-balance", [&] { return check_channel_balance(o); }},
      {"layout.read-granularity", [&] { return check_read_granularity(o); }},
      {"layout.write-amplification", [&] { return check_write_amplification(o); }},
      {"flash.bandwidth", [&] { return check_flash_bandwidth(o); }},
      {"flash.timeline", [&] { return check_flash_timeline(o); }},
      {"engine.model", [&] { return check_engine(o); }},
      {"system.sizing", [&] { return check_system_sizing(o); }},
      {"system.trends", [&] { return check_system_trends(o); }},
      {"system.determinism", [&] { return check_determinism(o); }},
  };
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, const std::function<Notes()>& body) {
    CheckResult r{name, false, ""};
    try {
      const auto notes = body();
      r.passed = notes.empty();
      for (std::size_t i = 0; i < notes.size() && i < 3; ++i) r.detail += (i ? "; " : "") + notes[i];
      if (notes.size() > 3) r.detail += "; +" + std::to_string(notes.size() - 3) + " more";
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    out.push_back(std::move(r));
  };
  for (const auto& [name, body] : suite) record(name, body);
  if (!o.vectors_path.empty()) record("attention.test-vectors", [&] { return check_vectors(o); });
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace sparf::verify
