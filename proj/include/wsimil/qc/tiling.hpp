#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsimil/qc/image.hpp"

namespace wsimil::qc {

struct TileCoord {
  std::uint32_t col = 0;
  std::uint32_t row = 0;

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
  friend auto operator<=>(const TileCoord& a, const TileCoord& b) {
    if (auto c = a.row <=> b.row; c != 0) return c;
    return a.col <=> b.col;
  }
};

/// Non-overlapping square tiles. `tile_size` is measured at the extraction
/// level, so each tile spans tile_size * level_downsample base pixels.
struct TileGrid {
  std::int64_t slide_width = 0;
  std::int64_t slide_height = 0;
  int tile_size = 224;
  int level_downsample = 1;
  std::vector<TileCoord> tiles;

  std::int64_t footprint() const { return static_cast<std::int64_t>(tile_size) * level_downsample; }
  int cols() const { return static_cast<int>(slide_width / footprint()); }
  int rows() const { return static_cast<int>(slide_height / footprint()); }
  std::int64_t origin_x(const TileCoord& t) const { return t.col * footprint(); }
  std::int64_t origin_y(const TileCoord& t) const { return t.row * footprint(); }
};

/// Plans the grid at stride tile_size; partial edge tiles are dropped. A tile
/// is kept when its base-pixel footprint touches any set mask pixel. Tiles are
/// ordered row-major. A tile larger than the slide yields an empty grid and a
/// warning.
TileGrid plan_tiles(std::int64_t width, std::int64_t height, int tile_size,
                    const TissueMask& mask, int level_downsample = 1,
                    std::vector<std::string>* warnings = nullptr);

/// Every full tile, no mask.
TileGrid plan_all_tiles(std::int64_t width, std::int64_t height, int tile_size,
                        int level_downsample = 1);

}  // namespace wsimil::qc
