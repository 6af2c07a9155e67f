#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wsimil/qc/tiling.hpp"

namespace wsimil::heatmap {

inline constexpr float kNoTissue = -1.0f;

/// One value per tile position of a slide's grid; kNoTissue where no tile
/// was extracted.
struct AttentionMap {
  std::string slide_id;
  int cols = 0;
  int rows = 0;
  int tile_size = 224;
  int level_downsample = 1;
  std::vector<float> values;

  float get(int c, int r) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Binary raster on a tile grid.
struct GridMask {
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> values;

  GridMask() = default;
  GridMask(int c, int r) : cols(c), rows(r), values(static_cast<std::size_t>(c) * r, 0) {}
  bool get(int c, int r) const { return values[static_cast<std::size_t>(r) * cols + c] != 0; }
  void set(int c, int r, bool v) { values[static_cast<std::size_t>(r) * cols + c] = v ? 1 : 0; }
  std::size_t count() const;
};

/// Places attention[i] at coords[i]. Throws ShapeError on a length mismatch or
/// a coordinate outside cols x rows.
AttentionMap rasterize_attention(const std::string& slide_id, std::span<const double> attention,
                                 std::span<const qc::TileCoord> coords, int cols, int rows, int tile_size = 224,
                                 int level_downsample = 1);
AttentionMap rasterize_attention(const std::string& slide_id, std::span<const double> attention,
                                 const qc::TileGrid& grid);

/// value >= t over tissue cells.
GridMask threshold_map(const AttentionMap& map, double t = 0.5);

/// 2|A n B| / (|A| + |B|), 1 when both are empty. ShapeError on grid mismatch.
double dice(const GridMask& a, const GridMask& b);

/// Nine-anchor viridis, linearly interpolated; v in [0, 1].
std::array<std::uint8_t, 3> viridis(double v);

/// RGBA overlay, `scale` pixels per grid cell; non-tissue is transparent.
void write_attention_png(const std::filesystem::path& path, const AttentionMap& map, int scale = 8,
                         std::uint8_t alpha = 255);
/// col,row,x,y,attention for tissue cells, row-major.
void write_attention_csv(const std::filesystem::path& path, const AttentionMap& map);

/// Polygon annotation: closed rings in base-pixel coordinates. JSON schema:
///   {"polygons": [[[x, y], [x, y], ...], ...]}
/// or a bare list of rings.
using Ring = std::vector<std::pair<double, double>>;
std::vector<Ring> load_annotations(const std::filesystem::path& path);

/// Grid cells whose area is at least half covered by the rings (even-odd
/// rule), estimated on a 16 x 16 point lattice per cell.
GridMask rasterize_annotations(const std::vector<Ring>& rings, int cols, int rows, std::int64_t footprint);

}  // namespace wsimil::heatmap
