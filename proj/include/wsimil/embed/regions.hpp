#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wsimil/embed/bag.hpp"

namespace wsimil::embed {

/// Patch embeddings mean-pooled over square blocks of the patch grid.
struct RegionBag {
  std::string slide_id;
  std::uint32_t dim = 0;
  /// Region edge in level pixels; a multiple of the bag's tile size.
  std::uint32_t region_size = 0;
  std::vector<qc::TileCoord> region_coords;  // region-grid indices
  std::vector<float> values;                 // row-major M x dim
  std::vector<std::uint32_t> member_counts;  // patches per region
  std::vector<std::uint32_t> patch_region;   // region index of each bag row

  std::size_t size() const { return region_coords.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// Groups bag rows into region_size / tile_size squares (row-major region
/// order, empty regions omitted). Throws ShapeError when region_size is not a
/// positive multiple of the tile size.
RegionBag group_regions(const EmbeddingBag& bag, std::uint32_t region_size);

/// Maps per-region values back onto the bag rows.
std::vector<double> broadcast_to_patches(const RegionBag& regions, std::span<const double> per_region);

}  // namespace wsimil::embed
