#include "sparf/layout/geometry.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "sparf/errors.hpp"

namespace sparf::layout {

void FlashGeometry::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("FlashGeometry: " + m); };
  if (channels < 1 || dies_per_channel < 1 || planes_per_die < 1 || blocks_per_plane < 1 ||
      pages_per_block < 1)
    fail("all counts must be >= 1");
  if (!std::has_single_bit(page_size) || page_size < 512)
    fail("page_size must be a power of two >= 512, got " + std::to_string(page_size));
}

std::size_t PhysicalPageAddress::flat(const FlashGeometry& g) const {
  std::size_t idx = channel;
  idx = idx * g.dies_per_channel + die;
  idx = idx * g.planes_per_die + plane;
  idx = idx * g.blocks_per_plane + block;
  idx = idx * g.pages_per_block + page;
  return idx;
}

bool PhysicalPageAddress::valid_in(const FlashGeometry& g) const {
  return channel < g.channels && die < g.dies_per_channel && plane < g.planes_per_die &&
         block < g.blocks_per_plane && page < g.pages_per_block;
}

std::size_t group_size_tokens(std::size_t page_size, std::size_t head_dim,
                              std::size_t element_bytes) {
  const std::size_t row = head_dim * element_bytes;
  if (row == 0 || page_size % row != 0)
    throw ConfigError("page size " + std::to_string(page_size) + " is not a multiple of the " +
                      std::to_string(row) + "-byte token row");
  return page_size / row;
}

std::size_t embedding_stripe_tokens(std::size_t page_size, std::size_t embeddings_per_page,
                                    std::size_t element_bytes) {
  if (embeddings_per_page < 1 || element_bytes < 1)
    throw ConfigError("embedding group and element size must be >= 1");
  return page_size / (embeddings_per_page * element_bytes);
}

std::size_t default_embedding_group(std::size_t page_size, std::size_t max_context,
                                    std::size_t element_bytes) {
  if (max_context >= 2048) return 8;
  const std::size_t fit = page_size / (element_bytes * std::max<std::size_t>(max_context, 1));
  return std::clamp<std::size_t>(fit, 2, 8);
}

}  // namespace sparf::layout
