#pragma once

// KV-cache-oriented flash translation layer.
//
// Two append-only logical->physical tables live side by side:
//  * token-indexed: one page per (layer, head, K|V, token group of n tokens)
//  * embedding-indexed: one page per (layer, head, embedding group of g
//    embeddings, stripe of page/(2g) tokens); this is the second copy of K.
//
// New rows are staged in per-head group buffers (modeled device DRAM). A full
// group becomes a flush intent; intents are programmed in block-sized
// batches that mix heads. Tables are single-writer; const lookups may run
// concurrently between mutations.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparf/core/tensor.hpp"
#include "sparf/layout/geometry.hpp"

namespace sparf::layout {

enum class KvTensor : std::uint8_t { kKey, kValue };

struct TokenGroupKey {
  std::uint32_t layer = 0;
  std::uint32_t head = 0;
  KvTensor tensor = KvTensor::kKey;
  std::uint32_t group_id = 0;
  auto operator<=>(const TokenGroupKey&) const = default;
};

struct EmbeddingStripeKey {
  std::uint32_t layer = 0;
  std::uint32_t head = 0;
  std::uint32_t embedding_group_id = 0;
  std::uint32_t token_stripe_id = 0;
  auto operator<=>(const EmbeddingStripeKey&) const = default;
};

struct LayoutConfig {
  FlashGeometry geometry;
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 128;
  std::size_t element_bytes = 2;
  std::size_t embedding_group = 8;  // g
  /// Keep page contents so lookups can be gathered back (tests, fixtures).
  bool keep_payload = true;

  void validate() const;
  std::size_t token_group() const;   // n
  std::size_t stripe_tokens() const;
  std::size_t embedding_groups() const;  // ceil(d_h / g)
};

struct WriteStats {
  std::size_t logical_bytes = 0;   // data bytes inside programmed pages
  std::size_t physical_bytes = 0;  // pages_programmed * page_size
  std::size_t pages_programmed = 0;
  std::size_t blocks_erased = 0;
  std::size_t block_programs = 0;  // block-sized write batches issued

  /// physical / logical; 1 when nothing has been written.
  double write_amplification() const;
};

/// Logical vs physical bytes per tensor, for the duplicated-K accounting.
struct DuplicationStats {
  std::size_t key_logical_bytes = 0;
  std::size_t key_physical_bytes = 0;
  std::size_t value_logical_bytes = 0;
  std::size_t value_physical_bytes = 0;
  std::size_t key_buffered_bytes = 0;    // token-indexed K still in DRAM
  std::size_t value_buffered_bytes = 0;
};

enum class FlushKind : std::uint8_t { kTokenGroup, kEmbeddingStripe };

/// A full group or stripe waiting to be programmed.
struct FlushEvent {
  FlushKind kind = FlushKind::kTokenGroup;
  TokenGroupKey token;
  EmbeddingStripeKey stripe;
};

struct PageLookup {
  std::vector<PhysicalPageAddress> pages;  // one per flash-resident group, ascending group order
  std::size_t dram_hits = 0;               // groups served from the DRAM buffers
};

class KvLayout {
 public:
  explicit KvLayout(LayoutConfig config);

  const LayoutConfig& config() const noexcept { return config_; }

  /// Stages one token's K and V rows for (layer, head). Returns the flush
  /// intents this append completed; block-sized batches are programmed
  /// automatically once enough intents are pending.
  std::vector<FlushEvent> append_token_kv(std::size_t layer, std::size_t head,
                                          std::span<const double> key_row,
                                          std::span<const double> value_row);

  /// Programs pending intents in block-sized batches. With `force`, a final
  /// short batch is written too. Returns the pages programmed by this call.
  std::vector<PhysicalPageAddress> flush_pending(bool force);

  /// Ends the request: partial groups/stripes are flushed as partial pages
  /// and everything pending is programmed. Further appends throw.
  std::vector<PhysicalPageAddress> seal();

  /// Drops every request: all used blocks are erased and tables cleared.
  /// Returns one address (page 0) per erased block.
  std::vector<PhysicalPageAddress> drop_all();

  /// Pages holding the token groups touched by `tokens`.
  PageLookup lookup_token_pages(std::size_t layer, std::size_t head,
                                std::span<const std::size_t> tokens, KvTensor tensor) const;

  /// Pages holding the embedding groups touched by `embeddings` over tokens
  /// [token_begin, token_end).
  PageLookup lookup_embedding_pages(std::size_t layer, std::size_t head,
                                    std::span<const std::size_t> embeddings,
                                    std::size_t token_begin, std::size_t token_end) const;

  /// Reads rows back through the token-indexed table (flash pages or DRAM).
  core::Matrix gather_rows(std::size_t layer, std::size_t head, KvTensor tensor,
                           std::span<const std::size_t> tokens) const;
  /// Reads K columns back through the embedding-indexed table; one line per
  /// embedding, covering [token_begin, token_end).
  core::Matrix gather_columns(std::size_t layer, std::size_t head,
                              std::span<const std::size_t> embeddings, std::size_t token_begin,
                              std::size_t token_end) const;

  std::size_t tokens_appended(std::size_t layer, std::size_t head) const;
  std::size_t pending_intents() const noexcept { return pending_.size(); }
  const WriteStats& write_stats() const noexcept { return stats_; }
  DuplicationStats duplication_stats() const;
  std::size_t mapping_table_bytes() const;

  /// Deterministic placement; exposed for tests and the timing model.
  PhysicalPageAddress preferred_die(const TokenGroupKey& key) const;
  PhysicalPageAddress preferred_die(const EmbeddingStripeKey& key) const;

  const std::map<TokenGroupKey, PhysicalPageAddress>& token_table() const { return token_map_; }
  const std::map<EmbeddingStripeKey, PhysicalPageAddress>& embedding_table() const {
    return stripe_map_;
  }

  /// JSON with geometry, config, both tables, allocator state and counters
  /// (payloads are included only when kept).
  std::string to_json() const;
  static KvLayout from_json(const std::string& text);

 private:
  struct HeadState {
    std::size_t tokens = 0;
    std::vector<double> open_keys;    // rows of the open token group
    std::vector<double> open_values;
    std::vector<double> open_stripe;  // K rows of the open embedding stripe
    bool sealed = false;
  };
  struct PendingPage {
    FlushEvent event;
    std::vector<double> payload;
    std::size_t data_bytes = 0;
  };
  struct DieAllocator {
    std::uint32_t next_free_block = 0;  // plane-major index within the die
    std::int64_t active_block = -1;
    std::uint32_t write_pointer = 0;
    std::vector<std::uint32_t> used_blocks;
  };

  HeadState& state(std::size_t layer, std::size_t head);
  const HeadState& state(std::size_t layer, std::size_t head) const;
  void check_head(std::size_t layer, std::size_t head) const;
  void emit_token_groups(std::size_t layer, std::size_t head, HeadState& hs, std::size_t rows,
                         std::vector<FlushEvent>& events);
  void emit_stripe(std::size_t layer, std::size_t head, HeadState& hs, std::size_t rows,
                   std::vector<FlushEvent>& events);
  PhysicalPageAddress allocate(PhysicalPageAddress preferred);
  void program_batch(std::size_t count, std::vector<PhysicalPageAddress>& out);

  LayoutConfig config_;
  std::vector<HeadState> heads_;
  std::vector<PendingPage> pending_;
  std::map<TokenGroupKey, std::size_t> pending_tokens_;     // key -> index in pending_
  std::map<EmbeddingStripeKey, std::size_t> pending_stripes_;
  std::map<TokenGroupKey, PhysicalPageAddress> token_map_;
  std::map<EmbeddingStripeKey, PhysicalPageAddress> stripe_map_;
  std::map<std::size_t, std::vector<double>> page_store_;  // flat address -> payload
  std::map<std::size_t, std::size_t> page_data_bytes_;     // flat address -> data bytes
  std::vector<DieAllocator> dies_;
  WriteStats stats_;
  std::size_t key_physical_ = 0;
  std::size_t value_physical_ = 0;
};

/// A replayable write workload: `tokens` tokens appended to every
/// (layer, head), token-major.
struct WriteWorkload {
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t tokens = 0;
};

struct WriteAmplificationReport {
  WriteStats grouped;  // group buffers + block-batched writes
  WriteStats naive;    // one page program per 256 B token row
};

/// Replays `workload` through a payload-free KvLayout (then seals it) and
/// compares with a conventional FTL that programs each K/V row separately.
WriteAmplificationReport write_amplification_report(const WriteWorkload& workload,
                                                    LayoutConfig config);

/// Replays a JSON-lines command trace against `layout`, writing one JSON
/// response line per command to `out`. Commands (field "op"):
///   append            {layer, head, k, v} or {layer, head, count, seed}
///   lookup_tokens     {layer, head, tokens, tensor: "K"|"V"}
///   lookup_embeddings {layer, head, embeddings, token_begin, token_end}
///   flush | seal | drop | stats
/// Blank lines and lines starting with '#' are skipped. Errors carry the
/// 1-based line number.
void replay_trace(KvLayout& layout, std::istream& in, std::ostream& out);

}  // namespace sparf::layout
