#pragma once

#include <vector>

#include "wsimil/qc/image.hpp"

namespace wsimil::qc {

struct TissueParams {
  /// Base pixels per thumbnail pixel; copied into the resulting mask.
  int downsample = 1;
  /// Half-width of the square structuring element used for closing.
  int closing_radius = 2;
  /// Saturation threshold used when the histogram is degenerate. Otsu
  /// thresholds below this value are raised to it.
  double fallback_threshold = 0.05;
};

/// Otsu threshold over a 256-bin histogram of values in [0, 1]. Returns the
/// threshold value (values strictly above belong to the upper class), or a
/// negative number when fewer than two bins are populated.
double otsu_threshold(const std::vector<float>& values);

/// Tissue mask: saturation above an Otsu-chosen threshold, then closing.
TissueMask detect_tissue(const RgbImage& thumbnail, const TissueParams& params = {});

/// Morphological closing (dilate then erode) with a (2r+1)^2 square element.
void close_mask(TissueMask& mask, int radius);

}  // namespace wsimil::qc
