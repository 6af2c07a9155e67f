#include "wsimil/heatmap/attention_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wsimil/common/error.hpp"
#include "wsimil/common/png_io.hpp"

namespace wsimil::heatmap {

std::size_t GridMask::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

AttentionMap rasterize_attention(const std::string& slide_id, std::span<const double> attention,
                                 std::span<const qc::TileCoord> coords, int cols, int rows, int tile_size,
                                 int level_downsample) {
  if (attention.size() != coords.size())
    throw ShapeError("attention has " + std::to_string(attention.size()) + " values for " +
                     std::to_string(coords.size()) + " tiles");
  AttentionMap map;
  map.slide_id = slide_id;
  map.cols = cols;
  map.rows = rows;
  map.tile_size = tile_size;
  map.level_downsample = level_downsample;
  map.values.assign(static_cast<std::size_t>(cols) * rows, kNoTissue);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& c = coords[i];
    if (c.col >= static_cast<std::uint32_t>(cols) || c.row >= static_cast<std::uint32_t>(rows))
      throw ShapeError("tile (" + std::to_string(c.col) + ", " + std::to_string(c.row) + ") lies outside the grid");
    map.values[static_cast<std::size_t>(c.row) * cols + c.col] = static_cast<float>(attention[i]);
  }
  return map;
}

AttentionMap rasterize_attention(const std::string& slide_id, std::span<const double> attention,
                                 const qc::TileGrid& grid) {
  return rasterize_attention(slide_id, attention, grid.tiles, grid.cols(), grid.rows(), grid.tile_size,
                             grid.level_downsample);
}

GridMask threshold_map(const AttentionMap& map, double t) {
  GridMask mask(map.cols, map.rows);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    mask.values[i] = map.values[i] != kNoTissue && map.values[i] >= t;
  return mask;
}

double dice(const GridMask& a, const GridMask& b) {
  if (a.cols != b.cols || a.rows != b.rows) throw ShapeError("dice: masks are on different grids");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    na += a.values[i];
    nb += b.values[i];
    inter += a.values[i] & b.values[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::array<std::uint8_t, 3> viridis(double v) {
  static constexpr int anchors[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                                        {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                                        {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
  v = std::clamp(v, 0.0, 1.0) * 8.0;
  const int i = std::min(7, static_cast<int>(v));
  const double f = v - i;
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::lround(anchors[i][c] + f * (anchors[i + 1][c] - anchors[i][c])));
  return out;
}

void write_attention_png(const std::filesystem::path& path, const AttentionMap& map, int scale, std::uint8_t alpha) {
  const int w = std::max(1, map.cols * scale), h = std::max(1, map.rows * scale);
  std::vector<std::uint8_t> rgba(static_cast<std::size_t>(w) * h * 4, 0);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const float v = map.get(c, r);
      if (v == kNoTissue) continue;
      const auto rgb = viridis(v);
      for (int y = r * scale; y < (r + 1) * scale; ++y)
        for (int x = c * scale; x < (c + 1) * scale; ++x) {
          auto* p = rgba.data() + (static_cast<std::size_t>(y) * w + x) * 4;
          p[0] = rgb[0];
          p[1] = rgb[1];
          p[2] = rgb[2];
          p[3] = alpha;
        }
    }
  write_png_rgba(path, w, h, rgba);
}

void write_attention_csv(const std::filesystem::path& path, const AttentionMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "col,row,x,y,attention\n";
  const std::int64_t fp = static_cast<std::int64_t>(map.tile_size) * map.level_downsample;
  char buf[32];
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const float v = map.get(c, r);
      if (v == kNoTissue) continue;
      std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(v));
      out << c << ',' << r << ',' << c * fp << ',' << r * fp << ',' << buf << '\n';
    }
}

std::vector<Ring> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    const auto& list = j.is_object() ? j.at("polygons") : j;
    std::vector<Ring> rings;
    for (const auto& ring : list) {
      Ring r;
      for (const auto& pt : ring) r.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
      if (r.size() < 3) throw DataError("annotation ring with fewer than 3 points");
      rings.push_back(std::move(r));
    }
    return rings;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid annotation JSON: " + e.what());
  }
}

namespace {

bool inside(const std::vector<Ring>& rings, double x, double y) {
  bool in = false;
  for (const auto& ring : rings) {
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
      const auto [xi, yi] = ring[i];
      const auto [xj, yj] = ring[j];
      if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
    }
  }
  return in;
}

}  // namespace

GridMask rasterize_annotations(const std::vector<Ring>& rings, int cols, int rows, std::int64_t footprint) {
  constexpr int kSamples = 16;
  GridMask mask(cols, rows);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int hits = 0;
      for (int sy = 0; sy < kSamples; ++sy)
        for (int sx = 0; sx < kSamples; ++sx) {
          const double x = (c + (sx + 0.5) / kSamples) * static_cast<double>(footprint);
          const double y = (r + (sy + 0.5) / kSamples) * static_cast<double>(footprint);
          hits += inside(rings, x, y);
        }
      mask.set(c, r, 2 * hits >= kSamples * kSamples);
    }
  return mask;
}

}  // namespace wsimil::heatmap
