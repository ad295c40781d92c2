#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>

namespace sparf::layout {

/// Shape of one flash backend.
struct FlashGeometry {
  std::size_t channels = 8;
  std::size_t dies_per_channel = 32;
  std::size_t planes_per_die = 1;
  std::size_t blocks_per_plane = 8192;
  std::size_t pages_per_block = 256;
  std::size_t page_size = 4096;

  void validate() const;

  std::size_t dies() const { return channels * dies_per_channel; }
  std::size_t blocks_per_die() const { return planes_per_die * blocks_per_plane; }
  std::size_t total_pages() const { return dies() * blocks_per_die() * pages_per_block; }
  std::size_t capacity_bytes() const { return total_pages() * page_size; }
  std::size_t block_bytes() const { return pages_per_block * page_size; }
};

struct PhysicalPageAddress {
  std::uint32_t channel = 0;
  std::uint32_t die = 0;
  std::uint32_t plane = 0;
  std::uint32_t block = 0;
  std::uint32_t page = 0;

  auto operator<=>(const PhysicalPageAddress&) const = default;

  /// Unique linear index within a geometry.
  std::size_t flat(const FlashGeometry& g) const;
  bool valid_in(const FlashGeometry& g) const;
  /// Global die index (channel-major).
  std::size_t die_index(const FlashGeometry& g) const { return channel * g.dies_per_channel + die; }
};

/// Tokens per token-indexed page: page_size / (d_h * element_bytes).
/// Throws ConfigError when the page does not divide evenly.
std::size_t group_size_tokens(std::size_t page_size, std::size_t head_dim,
                              std::size_t element_bytes);

/// Tokens per embedding-indexed page when `embeddings_per_page` embeddings
/// share a page: page_size / (g * element_bytes).
std::size_t embedding_stripe_tokens(std::size_t page_size, std::size_t embeddings_per_page,
                                    std::size_t element_bytes);

/// Embeddings per embedding-indexed page: 8 for models with a context of at
/// least 2048 tokens, else page/(2*max_context) clamped to [2, 8].
std::size_t default_embedding_group(std::size_t page_size, std::size_t max_context,
                                    std::size_t element_bytes = 2);

}  // namespace sparf::layout
