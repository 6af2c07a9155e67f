#pragma once

#include <cstdint>
#include <vector>

namespace wsimil::qc {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) { resize(w, h); }

  void resize(int w, int h) {
    width = w;
    height = h;
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
  }
  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
  void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);
  /// Rotates 90 degrees clockwise.
  RgbImage rotated90() const;
};

/// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  float h;
  float s;
  float v;
};

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Binary raster over a slide at a fixed downsample: mask pixel (i, j) covers
/// base pixels [i*downsample, (i+1)*downsample) x [j*downsample, (j+1)*downsample).
struct TissueMask {
  int width = 0;
  int height = 0;
  int downsample = 1;
  std::vector<std::uint8_t> values;

  bool get(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { values[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

enum class PixelClass : std::uint8_t { Background = 0, Accepted = 1, Artefact = 2 };

/// Per-pixel three-class raster.
struct ClassMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  ClassMap() = default;
  ClassMap(int w, int h, PixelClass fill = PixelClass::Background)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, static_cast<std::uint8_t>(fill)) {}
  PixelClass get(int x, int y) const {
    return static_cast<PixelClass>(labels[static_cast<std::size_t>(y) * width + x]);
  }
  void set(int x, int y, PixelClass c) {
    labels[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(c);
  }
};

}  // namespace wsimil::qc
