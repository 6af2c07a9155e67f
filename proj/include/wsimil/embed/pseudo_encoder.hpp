#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsimil/qc/image.hpp"

namespace wsimil::embed {

inline constexpr int kHistogramBins = 16;           // per HSV channel
inline constexpr int kTextureFeatures = 8;
inline constexpr int kRawFeatures = 3 * kHistogramBins + kTextureFeatures;

/// 48 HSV histogram bins (square-rooted) followed by 8 texture statistics
/// of the grey-level gradient magnitude.
std::vector<double> handcrafted_features(const qc::RgbImage& patch);

/// Deterministic stand-in for a frozen patch encoder: handcrafted features
/// projected to `dim` by a seed-derived matrix with orthonormal rows (for the
/// first 56 rows), then L2-normalised. Requires dim >= 8.
std::vector<float> pseudo_encode(const qc::RgbImage& patch, std::uint64_t seed, int dim);

std::string pseudo_encoder_id(std::uint64_t seed, int dim);

}  // namespace wsimil::embed
