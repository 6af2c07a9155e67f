#include "wsimil/qc/patch_qc.hpp"

#include <algorithm>
#include <vector>

#include "wsimil/common/error.hpp"

namespace wsimil::qc {

namespace {

bool in_band(float hue, const std::array<float, 2>& band) { return hue >= band[0] && hue <= band[1]; }

/// Local variance of the 4-neighbour Laplacian over a square window.
std::vector<double> laplacian_local_variance(const RgbImage& patch, int window) {
  const int w = patch.width, h = patch.height;
  std::vector<float> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto* p = patch.at(x, y);
      gray[static_cast<std::size_t>(y) * w + x] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
  auto g = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return gray[static_cast<std::size_t>(y) * w + x];
  };
  // integral images of L and L^2
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> s1(stride * (h + 1), 0.0), s2(stride * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double r1 = 0.0, r2 = 0.0;
    for (int x = 0; x < w; ++x) {
      const double lap = 4.0 * g(x, y) - g(x - 1, y) - g(x + 1, y) - g(x, y - 1) - g(x, y + 1);
      r1 += lap;
      r2 += lap * lap;
      s1[(y + 1) * stride + x + 1] = s1[y * stride + x + 1] + r1;
      s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + r2;
    }
  }
  const int half = std::max(1, window / 2);
  std::vector<double> var(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h, y + half + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half), x1 = std::min(w, x + half + 1);
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      auto box = [&](const std::vector<double>& s) {
        return s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0] + s[y0 * stride + x0];
      };
      const double mean = box(s1) / n;
      var[static_cast<std::size_t>(y) * w + x] = std::max(0.0, box(s2) / n - mean * mean);
    }
  }
  return var;
}

}  // namespace

ClassMap classify_pixels(const RgbImage& patch, const QcParams& params) {
  if (patch.empty()) throw ShapeError("qc: empty patch");
  ClassMap map(patch.width, patch.height, PixelClass::Accepted);
  const auto variance = laplacian_local_variance(patch, params.blur_window);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const auto* p = patch.at(x, y);
      const Hsv hsv = rgb_to_hsv(p[0], p[1], p[2]);
      PixelClass c = PixelClass::Accepted;
      if (hsv.s < params.background_saturation_max && hsv.v > params.background_value_min) {
        c = PixelClass::Background;
      } else {
        const bool blur = variance[static_cast<std::size_t>(y) * patch.width + x] < params.blur_variance_max;
        const bool fold = hsv.v < params.fold_value_max && hsv.s > params.fold_saturation_min;
        const bool pen = hsv.v < params.black_value_max ||
                         (hsv.s > params.pen_saturation_min &&
                          (in_band(hsv.h, params.green_hue) || in_band(hsv.h, params.blue_hue)));
        if (blur || fold || pen) c = PixelClass::Artefact;
      }
      map.set(x, y, c);
    }
  }
  return map;
}

QcPatchResult fractions_of(const ClassMap& map, int level_downsample) {
  std::array<std::uint64_t, 3> counts{};
  for (auto label : map.labels) counts[label]++;
  const double n = static_cast<double>(map.labels.size());
  QcPatchResult r;
  if (n > 0) {
    r.background = counts[0] / n;
    r.accepted = counts[1] / n;
    r.artefact = counts[2] / n;
  }
  r.base_pixels = static_cast<std::uint64_t>(map.labels.size()) * level_downsample * level_downsample;
  return r;
}

QcPatchResult qc_score_patch(const RgbImage& patch, const QcParams& params, int level_downsample) {
  ClassMap map = classify_pixels(patch, params);
  QcPatchResult r = fractions_of(map, level_downsample);
  if (params.keep_class_map) r.class_map = std::move(map);
  return r;
}

QcSummary slide_qc_summary(std::span<const QcPatchResult> results, const std::string& slide_id) {
  QcSummary s;
  s.slide_id = slide_id;
  s.patches = results.size();
  for (const auto& r : results) {
    const double n = static_cast<double>(r.base_pixels);
    s.background_pixels += r.background * n;
    s.accepted_pixels += r.accepted * n;
    s.artefact_pixels += r.artefact * n;
    if (patch_filter(r)) ++s.kept_patches;
  }
  const double total = s.background_pixels + s.accepted_pixels + s.artefact_pixels;
  if (total > 0.0) {
    s.background = s.background_pixels / total;
    s.accepted = s.accepted_pixels / total;
    s.artefact = s.artefact_pixels / total;
  }
  const double tissue = s.accepted_pixels + s.artefact_pixels;
  s.tissue_fraction_rejected = tissue > 0.0 ? std::clamp(s.artefact_pixels / tissue, 0.0, 1.0) : 1.0;
  s.excluded = s.tissue_fraction_rejected > kSlideRejectionLimit;
  return s;
}

QcDice qc_dice(const ClassMap& pred, const ClassMap& ref) {
  if (pred.width != ref.width || pred.height != ref.height)
    throw ShapeError("qc_dice: class maps differ in shape");
  std::array<std::uint64_t, 3> p{}, r{}, both{};
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const auto a = pred.labels[i], b = ref.labels[i];
    if (a > 2 || b > 2) throw DataError("qc_dice: label outside {0,1,2}");
    p[a]++;
    r[b]++;
    if (a == b) both[a]++;
  }
  QcDice d;
  for (int c = 0; c < 3; ++c) {
    const auto denom = p[c] + r[c];
    d.per_class[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(both[c]) / static_cast<double>(denom);
  }
  d.macro = (d.per_class[0] + d.per_class[1] + d.per_class[2]) / 3.0;
  return d;
}

}  // namespace wsimil::qc
