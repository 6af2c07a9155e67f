#include "wsimil/qc/image.hpp"

#include <algorithm>
#include <numeric>

namespace wsimil::qc {

void RgbImage::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
    pixels[i] = r;
    pixels[i + 1] = g;
    pixels[i + 2] = b;
  }
}

RgbImage RgbImage::rotated90() const {
  RgbImage out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const auto* src = at(x, y);
      out.set(height - 1 - y, x, src[0], src[1], src[2]);
    }
  return out;
}

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const float r = r8 / 255.0f, g = g8 / 255.0f, b = b8 / 255.0f;
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float delta = mx - mn;
  Hsv out{0.0f, mx > 0.0f ? delta / mx : 0.0f, mx};
  if (delta > 0.0f) {
    float h;
    if (mx == r)
      h = 60.0f * ((g - b) / delta);
    else if (mx == g)
      h = 60.0f * ((b - r) / delta + 2.0f);
    else
      h = 60.0f * ((r - g) / delta + 4.0f);
    if (h < 0.0f) h += 360.0f;
    if (h >= 360.0f) h -= 360.0f;
    out.h = h;
  }
  return out;
}

std::size_t TissueMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

}  // namespace wsimil::qc
