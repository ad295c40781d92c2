#include "sparf/layout/kv_layout.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "sparf/errors.hpp"

namespace sparf::layout {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

void LayoutConfig::validate() const {
  geometry.validate();
  if (layers < 1 || heads < 1) throw ConfigError("LayoutConfig: layers and heads must be >= 1");
  if (head_dim < 1 || element_bytes < 1)
    throw ConfigError("LayoutConfig: head_dim and element_bytes must be >= 1");
  if (embedding_group < 1 || embedding_group > head_dim)
    throw ConfigError("LayoutConfig: embedding group must lie in [1, d_h]");
  (void)token_group();  // throws on a non-divisible page
  if (stripe_tokens() < 1) throw ConfigError("LayoutConfig: embedding group too large for page");
}

std::size_t LayoutConfig::token_group() const {
  return group_size_tokens(geometry.page_size, head_dim, element_bytes);
}

std::size_t LayoutConfig::stripe_tokens() const {
  return embedding_stripe_tokens(geometry.page_size, embedding_group, element_bytes);
}

std::size_t LayoutConfig::embedding_groups() const { return ceil_div(head_dim, embedding_group); }

double WriteStats::write_amplification() const {
  if (logical_bytes == 0) return 1.0;
  return static_cast<double>(physical_bytes) / static_cast<double>(logical_bytes);
}

KvLayout::KvLayout(LayoutConfig config) : config_(std::move(config)) {
  config_.validate();
  heads_.resize(config_.layers * config_.heads);
  dies_.resize(config_.geometry.dies());
}

void KvLayout::check_head(std::size_t layer, std::size_t head) const {
  if (layer >= config_.layers || head >= config_.heads)
    throw MappingError("unknown (layer " + std::to_string(layer) + ", head " +
                       std::to_string(head) + ")");
}

KvLayout::HeadState& KvLayout::state(std::size_t layer, std::size_t head) {
  check_head(layer, head);
  return heads_[layer * config_.heads + head];
}

const KvLayout::HeadState& KvLayout::state(std::size_t layer, std::size_t head) const {
  check_head(layer, head);
  return heads_[layer * config_.heads + head];
}

std::size_t KvLayout::tokens_appended(std::size_t layer, std::size_t head) const {
  return state(layer, head).tokens;
}

PhysicalPageAddress KvLayout::preferred_die(const TokenGroupKey& key) const {
  const auto& g = config_.geometry;
  PhysicalPageAddress a;
  // Consecutive groups of a head stride across channels; heads start on
  // distinct channels.
  a.channel = u32((key.head % g.channels + key.group_id) % g.channels);
  const std::size_t value_offset = key.tensor == KvTensor::kValue ? g.dies_per_channel / 2 : 0;
  a.die = u32((key.group_id / g.channels + key.head / g.channels + key.layer + value_offset) %
              g.dies_per_channel);
  return a;
}

PhysicalPageAddress KvLayout::preferred_die(const EmbeddingStripeKey& key) const {
  const auto& g = config_.geometry;
  PhysicalPageAddress a;
  a.channel = u32((key.head % g.channels + key.embedding_group_id + key.token_stripe_id) %
                  g.channels);
  const std::size_t linear =
      key.embedding_group_id + key.token_stripe_id * config_.embedding_groups();
  a.die = u32((linear / g.channels + key.head / g.channels + key.layer + g.dies_per_channel / 4) %
              g.dies_per_channel);
  return a;
}

PhysicalPageAddress KvLayout::allocate(PhysicalPageAddress preferred) {
  const auto& g = config_.geometry;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const std::size_t channel = (preferred.channel + c) % g.channels;
    for (std::size_t d = 0; d < g.dies_per_channel; ++d) {
      const std::size_t die = (preferred.die + d) % g.dies_per_channel;
      DieAllocator& alloc = dies_[channel * g.dies_per_channel + die];
      if (alloc.active_block < 0 || alloc.write_pointer == g.pages_per_block) {
        if (alloc.next_free_block == g.blocks_per_die()) continue;
        alloc.active_block = alloc.next_free_block++;
        alloc.write_pointer = 0;
        alloc.used_blocks.push_back(static_cast<std::uint32_t>(alloc.active_block));
      }
      PhysicalPageAddress a;
      a.channel = u32(channel);
      a.die = u32(die);
      a.plane = u32(static_cast<std::size_t>(alloc.active_block) / g.blocks_per_plane);
      a.block = u32(static_cast<std::size_t>(alloc.active_block) % g.blocks_per_plane);
      a.page = alloc.write_pointer++;
      return a;
    }
  }
  throw CapacityError("flash capacity", "flash device full (" +
                                            std::to_string(g.capacity_bytes()) + " bytes)");
}

void KvLayout::emit_token_groups(std::size_t layer, std::size_t head, HeadState& hs,
                                 std::size_t rows, std::vector<FlushEvent>& events) {
  const std::size_t group = (hs.tokens - 1) / config_.token_group();
  const std::size_t row_bytes = config_.head_dim * config_.element_bytes;
  for (KvTensor tensor : {KvTensor::kKey, KvTensor::kValue}) {
    PendingPage p;
    p.event.kind = FlushKind::kTokenGroup;
    p.event.token = {u32(layer), u32(head), tensor, u32(group)};
    p.data_bytes = rows * row_bytes;
    if (config_.keep_payload)
      p.payload = std::move(tensor == KvTensor::kKey ? hs.open_keys : hs.open_values);
    pending_tokens_[p.event.token] = pending_.size();
    events.push_back(p.event);
    pending_.push_back(std::move(p));
  }
  hs.open_keys.clear();
  hs.open_values.clear();
}

void KvLayout::emit_stripe(std::size_t layer, std::size_t head, HeadState& hs, std::size_t rows,
                           std::vector<FlushEvent>& events) {
  const std::size_t stripe = (hs.tokens - 1) / config_.stripe_tokens();
  const std::size_t d = config_.head_dim;
  const std::size_t g = config_.embedding_group;
  for (std::size_t eg = 0; eg < config_.embedding_groups(); ++eg) {
    const std::size_t begin = eg * g;
    const std::size_t end = std::min(begin + g, d);
    PendingPage p;
    p.event.kind = FlushKind::kEmbeddingStripe;
    p.event.stripe = {u32(layer), u32(head), u32(eg), u32(stripe)};
    p.data_bytes = (end - begin) * rows * config_.element_bytes;
    if (config_.keep_payload) {
      p.payload.resize((end - begin) * rows);
      for (std::size_t c = begin; c < end; ++c)
        for (std::size_t r = 0; r < rows; ++r)
          p.payload[(c - begin) * rows + r] = hs.open_stripe[r * d + c];
    }
    pending_stripes_[p.event.stripe] = pending_.size();
    events.push_back(p.event);
    pending_.push_back(std::move(p));
  }
  hs.open_stripe.clear();
}

std::vector<FlushEvent> KvLayout::append_token_kv(std::size_t layer, std::size_t head,
                                                  std::span<const double> key_row,
                                                  std::span<const double> value_row) {
  HeadState& hs = state(layer, head);
  if (hs.sealed) throw InvariantError("append to a sealed request");
  if (key_row.size() != config_.head_dim || value_row.size() != config_.head_dim)
    throw ConfigError("append_token_kv: rows must have d_h=" + std::to_string(config_.head_dim) +
                      " elements");
  if (config_.keep_payload) {
    hs.open_keys.insert(hs.open_keys.end(), key_row.begin(), key_row.end());
    hs.open_values.insert(hs.open_values.end(), value_row.begin(), value_row.end());
    hs.open_stripe.insert(hs.open_stripe.end(), key_row.begin(), key_row.end());
  }
  ++hs.tokens;
  std::vector<FlushEvent> events;
  if (hs.tokens % config_.token_group() == 0)
    emit_token_groups(layer, head, hs, config_.token_group(), events);
  if (hs.tokens % config_.stripe_tokens() == 0)
    emit_stripe(layer, head, hs, config_.stripe_tokens(), events);
  if (pending_.size() >= config_.geometry.pages_per_block) (void)flush_pending(false);
  return events;
}

void KvLayout::program_batch(std::size_t count, std::vector<PhysicalPageAddress>& out) {
  const auto& g = config_.geometry;
  for (std::size_t i = 0; i < count; ++i) {
    PendingPage& p = pending_[i];
    PhysicalPageAddress addr;
    if (p.event.kind == FlushKind::kTokenGroup) {
      addr = allocate(preferred_die(p.event.token));
      token_map_[p.event.token] = addr;
      (p.event.token.tensor == KvTensor::kKey ? key_physical_ : value_physical_) += g.page_size;
    } else {
      addr = allocate(preferred_die(p.event.stripe));
      stripe_map_[p.event.stripe] = addr;
      key_physical_ += g.page_size;
    }
    const std::size_t flat = addr.flat(g);
    if (page_data_bytes_.count(flat) != 0)
      throw InvariantError("page programmed twice without erase");
    page_data_bytes_[flat] = p.data_bytes;
    if (config_.keep_payload) page_store_[flat] = std::move(p.payload);
    stats_.logical_bytes += p.data_bytes;
    stats_.physical_bytes += g.page_size;
    ++stats_.pages_programmed;
    out.push_back(addr);
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(count));
  pending_tokens_.clear();
  pending_stripes_.clear();
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    if (pending_[i].event.kind == FlushKind::kTokenGroup)
      pending_tokens_[pending_[i].event.token] = i;
    else
      pending_stripes_[pending_[i].event.stripe] = i;
  }
  ++stats_.block_programs;
}

std::vector<PhysicalPageAddress> KvLayout::flush_pending(bool force) {
  std::vector<PhysicalPageAddress> programmed;
  const std::size_t batch = config_.geometry.pages_per_block;
  while (pending_.size() >= batch) program_batch(batch, programmed);
  if (force && !pending_.empty()) program_batch(pending_.size(), programmed);
  return programmed;
}

std::vector<PhysicalPageAddress> KvLayout::seal() {
  std::vector<FlushEvent> ignored;
  for (std::size_t layer = 0; layer < config_.layers; ++layer) {
    for (std::size_t head = 0; head < config_.heads; ++head) {
      HeadState& hs = state(layer, head);
      if (hs.sealed) continue;
      const std::size_t group_rows = hs.tokens % config_.token_group();
      if (group_rows != 0) emit_token_groups(layer, head, hs, group_rows, ignored);
      const std::size_t stripe_rows = hs.tokens % config_.stripe_tokens();
      if (stripe_rows != 0) emit_stripe(layer, head, hs, stripe_rows, ignored);
      hs.sealed = true;
    }
  }
  return flush_pending(true);
}

std::vector<PhysicalPageAddress> KvLayout::drop_all() {
  const auto& g = config_.geometry;
  std::vector<PhysicalPageAddress> erased;
  for (std::size_t i = 0; i < dies_.size(); ++i) {
    for (std::uint32_t blk : dies_[i].used_blocks) {
      PhysicalPageAddress a;
      a.channel = u32(i / g.dies_per_channel);
      a.die = u32(i % g.dies_per_channel);
      a.plane = u32(blk / g.blocks_per_plane);
      a.block = u32(blk % g.blocks_per_plane);
      erased.push_back(a);
    }
    dies_[i] = DieAllocator{};
  }
  stats_.blocks_erased += erased.size();
  std::fill(heads_.begin(), heads_.end(), HeadState{});
  pending_.clear();
  pending_tokens_.clear();
  pending_stripes_.clear();
  token_map_.clear();
  stripe_map_.clear();
  page_store_.clear();
  page_data_bytes_.clear();
  key_physical_ = 0;
  value_physical_ = 0;
  return erased;
}

PageLookup KvLayout::lookup_token_pages(std::size_t layer, std::size_t head,
                                        std::span<const std::size_t> tokens,
                                        KvTensor tensor) const {
  const HeadState& hs = state(layer, head);
  std::set<std::size_t> groups;
  for (std::size_t t : tokens) {
    if (t >= hs.tokens)
      throw MappingError("token " + std::to_string(t) + " not written for (layer " +
                         std::to_string(layer) + ", head " + std::to_string(head) + ")");
    groups.insert(t / config_.token_group());
  }
  PageLookup out;
  for (std::size_t grp : groups) {
    auto it = token_map_.find({u32(layer), u32(head), tensor, u32(grp)});
    if (it != token_map_.end())
      out.pages.push_back(it->second);
    else
      ++out.dram_hits;
  }
  return out;
}

PageLookup KvLayout::lookup_embedding_pages(std::size_t layer, std::size_t head,
                                            std::span<const std::size_t> embeddings,
                                            std::size_t token_begin, std::size_t token_end) const {
  const HeadState& hs = state(layer, head);
  if (token_end > hs.tokens || token_begin >= token_end)
    throw MappingError("token range [" + std::to_string(token_begin) + ", " +
                       std::to_string(token_end) + ") not written");
  std::set<std::size_t> groups;
  for (std::size_t e : embeddings) {
    if (e >= config_.head_dim) throw MappingError("embedding " + std::to_string(e) + " >= d_h");
    groups.insert(e / config_.embedding_group);
  }
  const std::size_t first = token_begin / config_.stripe_tokens();
  const std::size_t last = (token_end - 1) / config_.stripe_tokens();
  PageLookup out;
  for (std::size_t eg : groups) {
    for (std::size_t s = first; s <= last; ++s) {
      auto it = stripe_map_.find({u32(layer), u32(head), u32(eg), u32(s)});
      if (it != stripe_map_.end())
        out.pages.push_back(it->second);
      else
        ++out.dram_hits;
    }
  }
  return out;
}

core::Matrix KvLayout::gather_rows(std::size_t layer, std::size_t head, KvTensor tensor,
                                   std::span<const std::size_t> tokens) const {
  if (!config_.keep_payload) throw InvariantError("gather_rows needs keep_payload");
  const HeadState& hs = state(layer, head);
  const std::size_t n = config_.token_group();
  const std::size_t d = config_.head_dim;
  const std::size_t open_base = hs.sealed ? hs.tokens : (hs.tokens / n) * n;
  core::Matrix out(tokens.size(), d);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const std::size_t t = tokens[j];
    if (t >= hs.tokens) throw MappingError("token " + std::to_string(t) + " not written");
    const TokenGroupKey key{u32(layer), u32(head), tensor, u32(t / n)};
    const std::vector<double>* src = nullptr;
    std::size_t row = t % n;
    if (auto it = token_map_.find(key); it != token_map_.end()) {
      src = &page_store_.at(it->second.flat(config_.geometry));
    } else if (auto pit = pending_tokens_.find(key); pit != pending_tokens_.end()) {
      src = &pending_[pit->second].payload;
    } else {
      src = tensor == KvTensor::kKey ? &hs.open_keys : &hs.open_values;
      row = t - open_base;
    }
    std::copy_n(src->begin() + static_cast<std::ptrdiff_t>(row * d), d, out.row(j).begin());
  }
  return out;
}

core::Matrix KvLayout::gather_columns(std::size_t layer, std::size_t head,
                                      std::span<const std::size_t> embeddings,
                                      std::size_t token_begin, std::size_t token_end) const {
  if (!config_.keep_payload) throw InvariantError("gather_columns needs keep_payload");
  const HeadState& hs = state(layer, head);
  if (token_end > hs.tokens || token_begin > token_end)
    throw MappingError("token range not written");
  const std::size_t st = config_.stripe_tokens();
  const std::size_t g = config_.embedding_group;
  const std::size_t d = config_.head_dim;
  const std::size_t open_base = hs.sealed ? hs.tokens : (hs.tokens / st) * st;
  core::Matrix out(embeddings.size(), token_end - token_begin);
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    const std::size_t e = embeddings[j];
    if (e >= d) throw MappingError("embedding " + std::to_string(e) + " >= d_h");
    const std::size_t eg = e / g;
    const std::size_t lines_begin = eg * g;
    for (std::size_t t = token_begin; t < token_end; ++t) {
      const std::size_t stripe = t / st;
      const EmbeddingStripeKey key{u32(layer), u32(head), u32(eg), u32(stripe)};
      const std::vector<double>* src = nullptr;
      if (auto it = stripe_map_.find(key); it != stripe_map_.end()) {
        src = &page_store_.at(it->second.flat(config_.geometry));
      } else if (auto pit = pending_stripes_.find(key); pit != pending_stripes_.end()) {
        src = &pending_[pit->second].payload;
      }
      if (src != nullptr) {
        // Page payload is line-major over the tokens actually in the stripe.
        const std::size_t rows = src->size() / (std::min(lines_begin + g, d) - lines_begin);
        out(j, t - token_begin) = (*src)[(e - lines_begin) * rows + (t - stripe * st)];
      } else {
        out(j, t - token_begin) = hs.open_stripe[(t - open_base) * d + e];
      }
    }
  }
  return out;
}

DuplicationStats KvLayout::duplication_stats() const {
  DuplicationStats s;
  const std::size_t row_bytes = config_.head_dim * config_.element_bytes;
  for (const auto& hs : heads_) {
    s.key_logical_bytes += hs.tokens * row_bytes;
    s.value_logical_bytes += hs.tokens * row_bytes;
  }
  s.key_physical_bytes = key_physical_;
  s.value_physical_bytes = value_physical_;
  std::size_t flushed_key = 0, flushed_value = 0;
  for (const auto& [key, addr] : token_map_) {
    const std::size_t bytes = page_data_bytes_.at(addr.flat(config_.geometry));
    (key.tensor == KvTensor::kKey ? flushed_key : flushed_value) += bytes;
  }
  s.key_buffered_bytes = s.key_logical_bytes - flushed_key;
  s.value_buffered_bytes = s.value_logical_bytes - flushed_value;
  return s;
}

std::size_t KvLayout::mapping_table_bytes() const {
  // Packed key (8 B) + packed physical address (8 B) per entry.
  return (token_map_.size() + stripe_map_.size()) * 16;
}

WriteAmplificationReport write_amplification_report(const WriteWorkload& workload,
                                                    LayoutConfig config) {
  config.layers = workload.layers;
  config.heads = workload.heads;
  config.keep_payload = false;
  KvLayout layout(config);
  const std::vector<double> row(config.head_dim, 0.0);
  for (std::size_t t = 0; t < workload.tokens; ++t)
    for (std::size_t l = 0; l < workload.layers; ++l)
      for (std::size_t h = 0; h < workload.heads; ++h) (void)layout.append_token_kv(l, h, row, row);
  (void)layout.seal();

  WriteAmplificationReport report;
  report.grouped = layout.write_stats();
  const std::size_t rows = workload.tokens * workload.layers * workload.heads * 2;
  const std::size_t row_bytes = config.head_dim * config.element_bytes;
  const std::size_t pages_per_row = ceil_div(row_bytes, config.geometry.page_size);
  report.naive.pages_programmed = rows * pages_per_row;
  report.naive.physical_bytes = report.naive.pages_programmed * config.geometry.page_size;
  report.naive.logical_bytes = rows * row_bytes;
  report.naive.block_programs = rows;
  return report;
}

}  // namespace sparf::layout
