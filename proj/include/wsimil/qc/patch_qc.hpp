#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "wsimil/qc/image.hpp"

namespace wsimil::qc {

/// Thresholds of the heuristic per-pixel QC classifier.
struct QcParams {
  // background: pale and unsaturated
  float background_saturation_max = 0.10f;
  float background_value_min = 0.80f;
  // blur: local variance of the grey-level Laplacian (8-bit units squared)
  int blur_window = 7;
  double blur_variance_max = 60.0;
  // folds and overstaining: dark yet saturated
  float fold_value_max = 0.40f;
  float fold_saturation_min = 0.35f;
  // pen marks
  float black_value_max = 0.20f;
  float pen_saturation_min = 0.25f;
  std::array<float, 2> green_hue{75.0f, 165.0f};
  std::array<float, 2> blue_hue{185.0f, 250.0f};

  bool keep_class_map = false;
};

struct QcPatchResult {
  double background = 0.0;
  double accepted = 0.0;
  double artefact = 0.0;
  /// Base-level pixels represented by this patch (analysed pixels x downsample^2).
  std::uint64_t base_pixels = 0;
  std::optional<ClassMap> class_map;
};

/// Classifies every pixel of `patch` as background, accepted or artefact.
ClassMap classify_pixels(const RgbImage& patch, const QcParams& params = {});

QcPatchResult qc_score_patch(const RgbImage& patch, const QcParams& params = {},
                             int level_downsample = 1);

/// Fractions of a class map; base_pixels = map area x downsample^2.
QcPatchResult fractions_of(const ClassMap& map, int level_downsample = 1);

/// Keep iff accepted tissue is strictly more than half the patch.
inline bool patch_filter(const QcPatchResult& result) { return result.accepted > 0.5; }

struct QcSummary {
  std::string slide_id;
  double background = 0.0;
  double accepted = 0.0;
  double artefact = 0.0;
  /// artefact / (artefact + accepted); background is not in the denominator.
  double tissue_fraction_rejected = 1.0;
  bool excluded = true;
  double accepted_pixels = 0.0;  // base level
  double artefact_pixels = 0.0;
  double background_pixels = 0.0;
  std::size_t patches = 0;
  std::size_t kept_patches = 0;
};

inline constexpr double kSlideRejectionLimit = 0.5;

/// Aggregates patch results. A slide without tissue pixels is rejected
/// entirely (fraction 1.0, excluded).
QcSummary slide_qc_summary(std::span<const QcPatchResult> results, const std::string& slide_id);

struct QcDice {
  std::array<double, 3> per_class{};  // indexed by PixelClass
  double macro = 0.0;
};

/// Per-class Dice and their mean; a class absent from both maps scores 1.
QcDice qc_dice(const ClassMap& pred, const ClassMap& ref);

}  // namespace wsimil::qc
