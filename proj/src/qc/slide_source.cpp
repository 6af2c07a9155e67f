#include "wsimil/qc/slide_source.hpp"

#include <tiffio.h>

#include <algorithm>
#include <fstream>
#include <string>

#include <json.hpp>

#include "wsimil/common/error.hpp"
#include "wsimil/common/png_io.hpp"
#include "wsimil/synth/procedural_slide.hpp"

namespace wsimil::qc {

RgbImage SlideSource::thumbnail(int downsample) const {
  if (downsample < 1) throw ShapeError("thumbnail downsample must be >= 1");
  const int w = static_cast<int>((width() + downsample - 1) / downsample);
  const int h = static_cast<int>((height() + downsample - 1) / downsample);
  RgbImage out(w, h);
  // Bands of rows keep the working set bounded for very large slides.
  constexpr int kBand = 64;
  RgbImage band;
  for (int y0 = 0; y0 < h; y0 += kBand) {
    const int bh = std::min(kBand, h - y0);
    read_region(0, static_cast<std::int64_t>(y0) * downsample, w, bh, downsample, band);
    std::copy(band.pixels.begin(), band.pixels.end(), out.at(0, y0));
  }
  return out;
}

TiledSource::TiledSource(std::int64_t width, std::int64_t height, int tile_width, int tile_height,
                         std::size_t cache_tiles)
    : width_(width),
      height_(height),
      tile_width_(tile_width),
      tile_height_(tile_height),
      cache_capacity_(std::max<std::size_t>(cache_tiles, 1)) {
  if (width <= 0 || height <= 0 || tile_width <= 0 || tile_height <= 0)
    throw DataError("slide has invalid dimensions");
}

std::shared_ptr<const RgbImage> TiledSource::tile(int tx, int ty) const {
  const std::int64_t key = (static_cast<std::int64_t>(ty) << 32) | static_cast<std::uint32_t>(tx);
  {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
  }
  auto decoded = load_tile(tx, ty);
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second->second;
  lru_.emplace_front(key, decoded);
  index_[key] = lru_.begin();
  while (lru_.size() > cache_capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return decoded;
}

void TiledSource::read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                              RgbImage& out) const {
  if (w <= 0 || h <= 0 || downsample < 1) throw ShapeError("invalid region request");
  out.resize(w, h);
  if (downsample == 1) out.fill(255, 255, 255);
  const std::int64_t bx1 = x + static_cast<std::int64_t>(w) * downsample;
  const std::int64_t by1 = y + static_cast<std::int64_t>(h) * downsample;
  std::vector<std::uint32_t> sums;
  std::vector<std::uint32_t> counts;
  if (downsample > 1) {
    sums.assign(static_cast<std::size_t>(w) * h * 3, 0);
    counts.assign(static_cast<std::size_t>(w) * h, 0);
  }
  const std::int64_t cx0 = std::max<std::int64_t>(x, 0), cy0 = std::max<std::int64_t>(y, 0);
  const std::int64_t cx1 = std::min(bx1, width_), cy1 = std::min(by1, height_);
  if (cx0 < cx1 && cy0 < cy1) {
    for (std::int64_t ty = cy0 / tile_height_; ty <= (cy1 - 1) / tile_height_; ++ty) {
      for (std::int64_t tx = cx0 / tile_width_; tx <= (cx1 - 1) / tile_width_; ++tx) {
        const auto t = tile(static_cast<int>(tx), static_cast<int>(ty));
        const std::int64_t ox = tx * tile_width_, oy = ty * tile_height_;
        const std::int64_t sx0 = std::max(cx0, ox), sx1 = std::min(cx1, ox + tile_width_);
        const std::int64_t sy0 = std::max(cy0, oy), sy1 = std::min(cy1, oy + tile_height_);
        for (std::int64_t sy = sy0; sy < sy1; ++sy) {
          const int oyi = static_cast<int>((sy - y) / downsample);
          for (std::int64_t sx = sx0; sx < sx1; ++sx) {
            const int oxi = static_cast<int>((sx - x) / downsample);
            std::uint8_t px[3] = {255, 255, 255};
            if (t && sx - ox < t->width && sy - oy < t->height) {
              const auto* p = t->at(static_cast<int>(sx - ox), static_cast<int>(sy - oy));
              px[0] = p[0];
              px[1] = p[1];
              px[2] = p[2];
            }
            if (downsample == 1) {
              out.set(oxi, oyi, px[0], px[1], px[2]);
            } else {
              const std::size_t o = static_cast<std::size_t>(oyi) * w + oxi;
              sums[o * 3] += px[0];
              sums[o * 3 + 1] += px[1];
              sums[o * 3 + 2] += px[2];
              ++counts[o];
            }
          }
        }
      }
    }
  }
  if (downsample > 1) {
    for (std::size_t o = 0; o < counts.size(); ++o) {
      std::uint8_t* p = out.pixels.data() + o * 3;
      if (counts[o] == 0) {
        p[0] = p[1] = p[2] = 255;
      } else {
        for (int c = 0; c < 3; ++c)
          p[c] = static_cast<std::uint8_t>((sums[o * 3 + c] + counts[o] / 2) / counts[o]);
      }
    }
  }
}

namespace {

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};

/// One page (pyramid level) of a TIFF file. Each level owns its handle so
/// decoding happens under that level's lock only.
class TiffLevel final : public TiledSource {
 public:
  TiffLevel(const std::filesystem::path& path, tdir_t dir, std::int64_t w, std::int64_t h, int tw,
            int th, bool tiled)
      : TiledSource(w, h, tw, th), handle_(TIFFOpen(path.c_str(), "r")), tiled_(tiled) {
    if (!handle_ || !TIFFSetDirectory(handle_.get(), dir))
      throw DataError("cannot open TIFF page of " + path.string());
  }

 protected:
  std::shared_ptr<const RgbImage> load_tile(int tx, int ty) const override {
    std::lock_guard lock(decode_mutex_);
    std::uint32_t tw = 0, th = 0, w = 0, h = 0;
    TIFF* tif = handle_.get();
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    if (tiled_) {
      TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
      TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
    } else {
      tw = w;
      TIFFGetFieldDefaulted(tif, TIFFTAG_ROWSPERSTRIP, &th);
      th = std::min(th, h);
    }
    std::vector<std::uint32_t> raster(static_cast<std::size_t>(tw) * th);
    const std::uint32_t x0 = static_cast<std::uint32_t>(tx) * tw;
    const std::uint32_t y0 = static_cast<std::uint32_t>(ty) * th;
    int ok = tiled_ ? TIFFReadRGBATile(tif, x0, y0, raster.data())
                    : TIFFReadRGBAStrip(tif, y0, raster.data());
    if (!ok) throw DataError("failed to decode TIFF tile");
    // RGBA rasters come back bottom-up; strips at the image end are short.
    const std::uint32_t valid_rows = tiled_ ? th : std::min(th, h - y0);
    auto image = std::make_shared<RgbImage>(static_cast<int>(tw), static_cast<int>(valid_rows));
    for (std::uint32_t r = 0; r < valid_rows; ++r) {
      const std::uint32_t src_row = tiled_ ? th - 1 - r : valid_rows - 1 - r;
      for (std::uint32_t c = 0; c < tw; ++c) {
        const std::uint32_t v = raster[static_cast<std::size_t>(src_row) * tw + c];
        image->set(static_cast<int>(c), static_cast<int>(r), TIFFGetR(v), TIFFGetG(v), TIFFGetB(v));
      }
    }
    return image;
  }

 private:
  std::unique_ptr<TIFF, TiffCloser> handle_;
  bool tiled_;
  mutable std::mutex decode_mutex_;
};

class TiffSlide final : public SlideSource {
 public:
  explicit TiffSlide(const std::filesystem::path& path) {
    std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "r"));
    if (!tif) throw DataError("cannot open TIFF " + path.string());
    tdir_t dir = 0;
    do {
      std::uint32_t w = 0, h = 0, tw = 0, th = 0;
      TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
      TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
      const bool tiled = TIFFIsTiled(tif.get());
      if (tiled) {
        TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
      } else {
        tw = w;
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &th);
        th = std::min(th, h);
      }
      if (w == 0 || h == 0) break;
      int factor = 1;
      if (!levels_.empty()) {
        const double ratio = static_cast<double>(levels_.front().second->width()) / w;
        factor = static_cast<int>(ratio + 0.5);
        // Only exact power-of-two reductions are usable pyramid levels.
        if (factor < 2 || (factor & (factor - 1)) != 0 || std::abs(ratio - factor) > 0.01 * factor) {
          ++dir;
          continue;
        }
      }
      levels_.emplace_back(factor,
                           std::make_unique<TiffLevel>(path, dir, w, h, static_cast<int>(tw),
                                                       static_cast<int>(th), tiled));
      ++dir;
    } while (TIFFReadDirectory(tif.get()));
    if (levels_.empty()) throw DataError("TIFF has no readable image: " + path.string());
  }

  std::int64_t width() const override { return levels_.front().second->width(); }
  std::int64_t height() const override { return levels_.front().second->height(); }

  void read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                   RgbImage& out) const override {
    // Use the coarsest level whose factor divides the requested downsample.
    const std::pair<int, std::unique_ptr<TiffLevel>>* best = &levels_.front();
    for (const auto& level : levels_)
      if (level.first <= downsample && downsample % level.first == 0 && level.first > best->first)
        best = &level;
    const int f = best->first;
    best->second->read_region(x / f, y / f, w, h, downsample / f, out);
  }

 private:
  std::vector<std::pair<int, std::unique_ptr<TiffLevel>>> levels_;
};

class TileDirectorySlide final : public TiledSource {
 public:
  TileDirectorySlide(std::filesystem::path dir, std::int64_t w, std::int64_t h, int tile)
      : TiledSource(w, h, tile, tile), dir_(std::move(dir)) {}

  static std::unique_ptr<TileDirectorySlide> open(const std::filesystem::path& dir) {
    std::ifstream in(dir / "slide.json");
    if (!in) throw DataError("tile directory lacks slide.json: " + dir.string());
    nlohmann::json meta;
    try {
      in >> meta;
      return std::make_unique<TileDirectorySlide>(dir, meta.at("width").get<std::int64_t>(),
                                                  meta.at("height").get<std::int64_t>(),
                                                  meta.at("tile_size").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("invalid slide.json in " + dir.string() + ": " + e.what());
    }
  }

 protected:
  std::shared_ptr<const RgbImage> load_tile(int tx, int ty) const override {
    const auto path = dir_ / (std::to_string(tx) + "_" + std::to_string(ty) + ".png");
    if (!std::filesystem::exists(path)) return nullptr;
    return std::make_shared<RgbImage>(read_png(path));
  }

 private:
  std::filesystem::path dir_;
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::unique_ptr<SlideSource> open_slide(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return TileDirectorySlide::open(path);
  if (!std::filesystem::exists(path)) throw DataError("slide image not found: " + path.string());
  std::string name = path.filename().string();
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ends_with(name, ".synth.json"))
    return std::make_unique<synth::ProceduralSlide>(synth::load_slide_layout(path));
  if (ends_with(name, ".tif") || ends_with(name, ".tiff")) return std::make_unique<TiffSlide>(path);
  throw DataError("unsupported slide format: " + path.string());
}

void write_tiled_tiff(const std::filesystem::path& path, const SlideSource& source, int tile_size,
                      int levels) {
  if (tile_size % 16 != 0) throw ShapeError("TIFF tile size must be a multiple of 16");
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) throw DataError("cannot write TIFF " + path.string());
  RgbImage region;
  for (int level = 0; level < std::max(1, levels); ++level) {
    const int factor = 1 << level;
    const auto w = static_cast<std::uint32_t>((source.width() + factor - 1) / factor);
    const auto h = static_cast<std::uint32_t>((source.height() + factor - 1) / factor);
    TIFF* t = tif.get();
    TIFFSetField(t, TIFFTAG_IMAGEWIDTH, w);
    TIFFSetField(t, TIFFTAG_IMAGELENGTH, h);
    TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 3);
    TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 8);
    TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_RGB);
    TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_ADOBE_DEFLATE);
    TIFFSetField(t, TIFFTAG_TILEWIDTH, static_cast<std::uint32_t>(tile_size));
    TIFFSetField(t, TIFFTAG_TILELENGTH, static_cast<std::uint32_t>(tile_size));
    if (level > 0) TIFFSetField(t, TIFFTAG_SUBFILETYPE, FILETYPE_REDUCEDIMAGE);
    for (std::uint32_t ty = 0; ty < h; ty += tile_size) {
      for (std::uint32_t tx = 0; tx < w; tx += tile_size) {
        source.read_region(static_cast<std::int64_t>(tx) * factor, static_cast<std::int64_t>(ty) * factor,
                           tile_size, tile_size, factor, region);
        if (TIFFWriteTile(t, region.pixels.data(), tx, ty, 0, 0) < 0)
          throw DataError("failed writing TIFF tile to " + path.string());
      }
    }
    if (!TIFFWriteDirectory(t)) throw DataError("failed finishing TIFF page in " + path.string());
  }
}

void write_tile_directory(const std::filesystem::path& dir, const SlideSource& source, int tile_size) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = {{"width", source.width()}, {"height", source.height()}, {"tile_size", tile_size}};
  std::ofstream(dir / "slide.json") << meta.dump(2) << '\n';
  RgbImage region;
  for (std::int64_t y = 0, ty = 0; y < source.height(); y += tile_size, ++ty) {
    for (std::int64_t x = 0, tx = 0; x < source.width(); x += tile_size, ++tx) {
      const int w = static_cast<int>(std::min<std::int64_t>(tile_size, source.width() - x));
      const int h = static_cast<int>(std::min<std::int64_t>(tile_size, source.height() - y));
      source.read_region(x, y, w, h, 1, region);
      write_png(dir / (std::to_string(tx) + "_" + std::to_string(ty) + ".png"), region);
    }
  }
}

}  // namespace wsimil::qc
