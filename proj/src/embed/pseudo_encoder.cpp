#include "wsimil/embed/pseudo_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>

#include "wsimil/common/error.hpp"

namespace wsimil::embed {

namespace {

using Projection = std::vector<double>;  // dim x kRawFeatures, row-major

std::shared_ptr<const Projection> projection(std::uint64_t seed, int dim) {
  static std::mutex mutex;
  static std::map<std::pair<std::uint64_t, int>, std::shared_ptr<const Projection>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{seed, dim}];
  if (slot) return slot;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto p = std::make_shared<Projection>(static_cast<std::size_t>(dim) * kRawFeatures);
  for (auto& v : *p) v = normal(rng);
  // Gram-Schmidt over rows while they can still be mutually orthogonal;
  // remaining rows are only normalised.
  for (int r = 0; r < dim; ++r) {
    double* row = p->data() + static_cast<std::size_t>(r) * kRawFeatures;
    if (r < kRawFeatures) {
      for (int q = 0; q < r; ++q) {
        const double* prev = p->data() + static_cast<std::size_t>(q) * kRawFeatures;
        double dot = 0.0;
        for (int k = 0; k < kRawFeatures; ++k) dot += row[k] * prev[k];
        for (int k = 0; k < kRawFeatures; ++k) row[k] -= dot * prev[k];
      }
    }
    double norm = 0.0;
    for (int k = 0; k < kRawFeatures; ++k) norm += row[k] * row[k];
    norm = std::sqrt(norm);
    for (int k = 0; k < kRawFeatures; ++k) row[k] /= norm;
  }
  slot = std::move(p);
  return slot;
}

}  // namespace

std::vector<double> handcrafted_features(const qc::RgbImage& patch) {
  if (patch.empty()) throw ShapeError("pseudo_encode: empty patch");
  const int w = patch.width, h = patch.height;
  const double n = static_cast<double>(w) * h;
  std::vector<double> f(kRawFeatures, 0.0);
  std::vector<double> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto* p = patch.at(x, y);
      const qc::Hsv hsv = qc::rgb_to_hsv(p[0], p[1], p[2]);
      const int hb = std::min(kHistogramBins - 1, static_cast<int>(hsv.h / 360.0f * kHistogramBins));
      const int sb = std::min(kHistogramBins - 1, static_cast<int>(hsv.s * kHistogramBins));
      const int vb = std::min(kHistogramBins - 1, static_cast<int>(hsv.v * kHistogramBins));
      f[hb] += 1.0;
      f[kHistogramBins + sb] += 1.0;
      f[2 * kHistogramBins + vb] += 1.0;
      gray[static_cast<std::size_t>(y) * w + x] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  for (int i = 0; i < 3 * kHistogramBins; ++i) f[i] = std::sqrt(f[i] / n);

  // Interior pixels only: the interior maps onto itself under 90-degree
  // rotations, so the statistics are rotation invariant.
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0, strong = 0, lap_abs = 0, count = 0;
  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(std::max(0, w - 2)) * std::max(0, h - 2));
  auto g = [&](int x, int y) { return gray[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = 0.5 * (g(x + 1, y) - g(x - 1, y));
      const double gy = 0.5 * (g(x, y + 1) - g(x, y - 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mags.push_back(m);
      s1 += m;
      if (m > 0.05) strong += 1;
      lap_abs += std::abs(4 * g(x, y) - g(x - 1, y) - g(x + 1, y) - g(x, y - 1) - g(x, y + 1));
      count += 1;
    }
  double mean = 0, sd = 0, skew = 0, kurt = 0;
  if (count > 0) {
    mean = s1 / count;
    for (double m : mags) {
      const double d = m - mean;
      s2 += d * d;
      s3 += d * d * d;
      s4 += d * d * d * d;
    }
    const double var = s2 / count;
    sd = std::sqrt(var);
    if (var > 1e-12) {
      skew = (s3 / count) / (var * sd);
      kurt = (s4 / count) / (var * var) - 3.0;
    }
  }
  double gmean = 0, gvar = 0;
  for (double v : gray) gmean += v;
  gmean /= n;
  for (double v : gray) gvar += (v - gmean) * (v - gmean);
  gvar /= n;

  double* t = f.data() + 3 * kHistogramBins;
  t[0] = 4.0 * mean;
  t[1] = 4.0 * sd;
  t[2] = 0.25 * std::tanh(skew / 4.0);
  t[3] = 0.25 * std::tanh(kurt / 10.0);
  t[4] = count > 0 ? strong / count : 0.0;
  t[5] = count > 0 ? lap_abs / count : 0.0;
  t[6] = gmean;
  t[7] = 2.0 * std::sqrt(gvar);
  return f;
}

std::vector<float> pseudo_encode(const qc::RgbImage& patch, std::uint64_t seed, int dim) {
  if (dim < 8) throw ShapeError("pseudo_encode: dimension must be >= 8");
  const auto features = handcrafted_features(patch);
  const auto proj = projection(seed, dim);
  std::vector<double> out(dim, 0.0);
  double norm = 0.0;
  for (int r = 0; r < dim; ++r) {
    const double* row = proj->data() + static_cast<std::size_t>(r) * kRawFeatures;
    double acc = 0.0;
    for (int k = 0; k < kRawFeatures; ++k) acc += row[k] * features[k];
    out[r] = acc;
    norm += acc * acc;
  }
  norm = std::sqrt(norm);
  std::vector<float> result(dim);
  for (int r = 0; r < dim; ++r) result[r] = static_cast<float>(norm > 0 ? out[r] / norm : 0.0);
  return result;
}

std::string pseudo_encoder_id(std::uint64_t seed, int dim) {
  return "pseudo-hsv-texture/v1/seed=" + std::to_string(seed) + "/dim=" + std::to_string(dim);
}

}  // namespace wsimil::embed
