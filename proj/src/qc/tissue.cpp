#include "wsimil/qc/tissue.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "wsimil/common/error.hpp"

namespace wsimil::qc {

double otsu_threshold(const std::vector<float>& values) {
  std::array<std::uint64_t, 256> hist{};
  for (float v : values) hist[std::clamp(static_cast<int>(v * 256.0f), 0, 255)]++;
  const int populated = static_cast<int>(std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }));
  if (populated < 2) return -1.0;

  double total = 0.0, total_sum = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += static_cast<double>(hist[i]);
    total_sum += static_cast<double>(i) * hist[i];
  }
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(hist[t]);
    sum0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (total_sum - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  // Upper edge of the last bin in the lower class.
  return (best_bin + 1) / 256.0;
}

namespace {

// Running max/min along one axis with out-of-range samples ignored.
void sweep(std::vector<std::uint8_t>& data, int width, int height, int radius, bool horizontal,
           bool dilate) {
  std::vector<std::uint8_t> line, result;
  const int n = horizontal ? width : height;
  const int lines = horizontal ? height : width;
  line.resize(n);
  result.resize(n);
  for (int l = 0; l < lines; ++l) {
    for (int i = 0; i < n; ++i)
      line[i] = horizontal ? data[static_cast<std::size_t>(l) * width + i]
                           : data[static_cast<std::size_t>(i) * width + l];
    // prefix count of set pixels gives O(1) window queries
    std::vector<int> prefix(n + 1, 0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (line[i] ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      const int a = std::max(0, i - radius), b = std::min(n - 1, i + radius);
      const int set = prefix[b + 1] - prefix[a];
      result[i] = dilate ? (set > 0) : (set == b - a + 1);
    }
    for (int i = 0; i < n; ++i) {
      if (horizontal)
        data[static_cast<std::size_t>(l) * width + i] = result[i];
      else
        data[static_cast<std::size_t>(i) * width + l] = result[i];
    }
  }
}

}  // namespace

void close_mask(TissueMask& mask, int radius) {
  if (radius <= 0 || mask.values.empty()) return;
  sweep(mask.values, mask.width, mask.height, radius, true, true);
  sweep(mask.values, mask.width, mask.height, radius, false, true);
  sweep(mask.values, mask.width, mask.height, radius, true, false);
  sweep(mask.values, mask.width, mask.height, radius, false, false);
}

TissueMask detect_tissue(const RgbImage& thumbnail, const TissueParams& params) {
  if (thumbnail.empty()) throw ShapeError("detect_tissue: empty thumbnail");
  const std::size_t n = static_cast<std::size_t>(thumbnail.width) * thumbnail.height;
  std::vector<float> saturation(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = thumbnail.pixels.data() + i * 3;
    saturation[i] = rgb_to_hsv(p[0], p[1], p[2]).s;
  }
  double threshold = otsu_threshold(saturation);
  if (threshold < params.fallback_threshold) threshold = params.fallback_threshold;

  TissueMask mask;
  mask.width = thumbnail.width;
  mask.height = thumbnail.height;
  mask.downsample = params.downsample;
  mask.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) mask.values[i] = saturation[i] > threshold ? 1 : 0;
  close_mask(mask, params.closing_radius);
  return mask;
}

}  // namespace wsimil::qc
