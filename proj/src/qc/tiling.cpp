#include "wsimil/qc/tiling.hpp"

#include <algorithm>

#include "wsimil/common/error.hpp"

namespace wsimil::qc {

namespace {

TileGrid empty_grid(std::int64_t width, std::int64_t height, int tile_size, int level_downsample) {
  if (tile_size < 1) throw ShapeError("tile_size must be >= 1");
  if (level_downsample < 1) throw ShapeError("level_downsample must be >= 1");
  if (width < 1 || height < 1) throw ShapeError("slide dimensions must be positive");
  TileGrid grid;
  grid.slide_width = width;
  grid.slide_height = height;
  grid.tile_size = tile_size;
  grid.level_downsample = level_downsample;
  return grid;
}

}  // namespace

TileGrid plan_tiles(std::int64_t width, std::int64_t height, int tile_size, const TissueMask& mask,
                    int level_downsample, std::vector<std::string>* warnings) {
  TileGrid grid = empty_grid(width, height, tile_size, level_downsample);
  if (grid.footprint() > width || grid.footprint() > height) {
    if (warnings)
      warnings->push_back("tile footprint " + std::to_string(grid.footprint()) +
                          " exceeds slide dimensions; no tiles planned");
    return grid;
  }
  if (mask.width <= 0 || mask.height <= 0 || mask.downsample < 1) return grid;

  // Summed-area table: any-overlap tests become O(1) per tile.
  const int mw = mask.width, mh = mask.height;
  std::vector<std::int64_t> sat(static_cast<std::size_t>(mw + 1) * (mh + 1), 0);
  auto at = [&](int x, int y) -> std::int64_t& { return sat[static_cast<std::size_t>(y) * (mw + 1) + x]; };
  for (int y = 0; y < mh; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < mw; ++x) {
      row += mask.get(x, y) ? 1 : 0;
      at(x + 1, y + 1) = at(x + 1, y) + row;
    }
  }

  const std::int64_t fp = grid.footprint();
  const int cols = grid.cols(), rows = grid.rows();
  const std::int64_t ds = mask.downsample;
  for (int r = 0; r < rows; ++r) {
    const std::int64_t y0 = r * fp, y1 = y0 + fp - 1;
    const int my0 = static_cast<int>(std::min<std::int64_t>(y0 / ds, mh));
    const int my1 = static_cast<int>(std::min<std::int64_t>(y1 / ds, mh - 1));
    if (my0 > my1) continue;
    for (int c = 0; c < cols; ++c) {
      const std::int64_t x0 = c * fp, x1 = x0 + fp - 1;
      const int mx0 = static_cast<int>(std::min<std::int64_t>(x0 / ds, mw));
      const int mx1 = static_cast<int>(std::min<std::int64_t>(x1 / ds, mw - 1));
      if (mx0 > mx1) continue;
      const std::int64_t covered = at(mx1 + 1, my1 + 1) - at(mx0, my1 + 1) - at(mx1 + 1, my0) + at(mx0, my0);
      if (covered > 0) grid.tiles.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)});
    }
  }
  return grid;
}

TileGrid plan_all_tiles(std::int64_t width, std::int64_t height, int tile_size, int level_downsample) {
  TileGrid grid = empty_grid(width, height, tile_size, level_downsample);
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c)
      grid.tiles.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)});
  return grid;
}

}  // namespace wsimil::qc
