#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "wsimil/qc/image.hpp"

namespace wsimil::qc {

/// Random-access pixel source for one slide. Implementations are safe to
/// call from several threads at once.
class SlideSource {
 public:
  virtual ~SlideSource() = default;

  /// Base (level 0) dimensions.
  virtual std::int64_t width() const = 0;
  virtual std::int64_t height() const = 0;

  /// Fills `out` with a w x h raster whose pixel (i, j) represents the base
  /// block starting at (x + i*downsample, y + j*downsample). Pixels outside
  /// the slide read as white.
  virtual void read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                           RgbImage& out) const = 0;

  /// Whole-slide raster at `downsample`, ceil-sized so the last partial block
  /// is included.
  RgbImage thumbnail(int downsample) const;
};

/// Shared implementation for sources stored as a grid of equally sized tiles.
/// Decoded tiles are kept in a small LRU cache; read_region box-averages.
class TiledSource : public SlideSource {
 public:
  TiledSource(std::int64_t width, std::int64_t height, int tile_width, int tile_height,
              std::size_t cache_tiles = 64);

  std::int64_t width() const override { return width_; }
  std::int64_t height() const override { return height_; }
  void read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                   RgbImage& out) const override;

 protected:
  /// Decodes tile (tx, ty). Missing tiles may return nullptr (read as white).
  virtual std::shared_ptr<const RgbImage> load_tile(int tx, int ty) const = 0;

 private:
  std::shared_ptr<const RgbImage> tile(int tx, int ty) const;

  std::int64_t width_;
  std::int64_t height_;
  int tile_width_;
  int tile_height_;
  std::size_t cache_capacity_;
  mutable std::mutex mutex_;
  mutable std::list<std::pair<std::int64_t, std::shared_ptr<const RgbImage>>> lru_;
  mutable std::map<std::int64_t, decltype(lru_)::iterator> index_;
};

/// Opens a slide by path:
///   *.tif / *.tiff           tiled or stripped (optionally pyramidal) TIFF
///   directory                pre-cut level-0 tiles: slide.json + {col}_{row}.png
///   *.synth.json             procedural synthetic slide description
std::unique_ptr<SlideSource> open_slide(const std::filesystem::path& path);

/// Writes `source` as a tiled, deflate-compressed RGB TIFF. `levels` > 1 adds
/// reduced-resolution pages at successive factors of two.
void write_tiled_tiff(const std::filesystem::path& path, const SlideSource& source,
                      int tile_size = 256, int levels = 1);

/// Writes `source` as a tile directory (slide.json + PNG tiles).
void write_tile_directory(const std::filesystem::path& dir, const SlideSource& source,
                          int tile_size);

}  // namespace wsimil::qc
