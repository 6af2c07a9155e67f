#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/embed/bag.hpp"
#include "wsimil/embed/pseudo_encoder.hpp"
#include "wsimil/embed/regions.hpp"
#include "wsimil/synth/procedural_slide.hpp"

using namespace wsimil;
using namespace wsimil::embed;

namespace {

qc::RgbImage patch(std::uint64_t seed, bool lesion = false) {
  auto layout = synth::SlideLayout::blank("p", 224, 224, 224, seed);
  layout.fill_tissue_rect(0, 0, 1, 1);
  layout.set_lesion(0, 0, lesion);
  synth::ProceduralSlide s(layout);
  qc::RgbImage img;
  s.read_region(0, 0, 224, 224, 1, img);
  return img;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += double{a[i]} * b[i];
    na += double{a[i]} * a[i];
    nb += double{b[i]} * b[i];
  }
  return d / std::sqrt(na * nb);
}

std::string serialise(const EmbeddingBag& bag) {
  std::ostringstream out(std::ios::binary);
  write_bag(out, bag);
  return out.str();
}

}  // namespace

TEST(PseudoEncoder, PureFunctionAndUnitNorm) {
  const auto img = patch(1);
  const auto a = pseudo_encode(img, 42, 64);
  const auto b = pseudo_encode(patch(1), 42, 64);
  EXPECT_EQ(a, b);
  double n = 0;
  for (float v : a) n += double{v} * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  EXPECT_NE(pseudo_encode(img, 43, 64), a);
  EXPECT_EQ(pseudo_encode(img, 42, 16).size(), 16u);
}

TEST(PseudoEncoder, NearlyRotationInvariant) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto img = patch(s, s % 2 == 1);
    EXPECT_GT(cosine(pseudo_encode(img, 7, 64), pseudo_encode(img.rotated90(), 7, 64)), 0.99);
  }
}

TEST(PseudoEncoder, SeparatesLesionFromNormal) {
  const auto n1 = pseudo_encode(patch(1), 7, 64), n2 = pseudo_encode(patch(2), 7, 64);
  const auto l1 = pseudo_encode(patch(3, true), 7, 64);
  EXPECT_GT(cosine(n1, n2), cosine(n1, l1));
}

TEST(BagFormat, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  auto bag = testing_support::random_bag(rng, 37, 12);
  bag.slide_id = "X";
  bag.tile_size = 256;
  bag.level_downsample = 2;
  std::istringstream in(serialise(bag), std::ios::binary);
  const auto back = read_bag(in, "X");
  EXPECT_EQ(back.slide_id, "X");
  EXPECT_EQ(back.encoder_id, bag.encoder_id);
  EXPECT_EQ(back.dim, bag.dim);
  EXPECT_EQ(back.tile_size, 256u);
  EXPECT_EQ(back.level_downsample, 2u);
  EXPECT_EQ(back.coords, bag.coords);
  EXPECT_EQ(std::memcmp(back.values.data(), bag.values.data(), bag.values.size() * sizeof(float)), 0);
}

TEST(BagFormat, FileNameIsSlideId) {
  testing_support::TempDir dir("bags");
  std::mt19937_64 rng(2);
  auto bag = testing_support::random_bag(rng, 5, 4);
  bag.slide_id = "P01_S2";
  write_bag(bag_path(dir.path(), bag.slide_id), bag);
  EXPECT_EQ(read_bag(bag_path(dir.path(), "P01_S2")).slide_id, "P01_S2");
}

TEST(BagFormat, TruncatedAndWrongMagic) {
  std::mt19937_64 rng(3);
  const auto bytes = serialise(testing_support::random_bag(rng, 6, 5));
  std::istringstream truncated(bytes.substr(0, bytes.size() - 7), std::ios::binary);
  try {
    read_bag(truncated);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unexpected end"), std::string::npos);
  }
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream wrong(bad, std::ios::binary);
  try {
    read_bag(wrong);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("not an embedding bag"), std::string::npos);
  }
}

TEST(BagFormat, ValidationRejectsDuplicatesAndNaN) {
  std::mt19937_64 rng(4);
  auto bag = testing_support::random_bag(rng, 4, 3);
  bag.coords[1] = bag.coords[0];
  EXPECT_THROW(bag.validate(), DataError);
  bag = testing_support::random_bag(rng, 4, 3);
  bag.values[5] = std::nanf("");
  EXPECT_THROW(bag.validate(), DataError);
}

TEST(Regions, SingleRegionIsMean) {
  EmbeddingBag bag;
  bag.slide_id = "r";
  bag.dim = 2;
  bag.coords = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  bag.values = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto r = group_regions(bag, 448);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FLOAT_EQ(r.values[0], 4.0f);
  EXPECT_FLOAT_EQ(r.values[1], 5.0f);
  EXPECT_EQ(r.member_counts[0], 4u);
}

TEST(Regions, IdentityAndOccupancy) {
  std::mt19937_64 rng(5);
  const auto bag = testing_support::random_bag(rng, 20, 6, 8);
  const auto id = group_regions(bag, bag.tile_size);
  ASSERT_EQ(id.size(), bag.size());
  std::vector<float> values(bag.size() * bag.dim);
  for (std::size_t i = 0; i < bag.size(); ++i) {
    const auto region = id.patch_region[i];
    EXPECT_EQ(id.region_coords[region], bag.coords[i]);
    for (std::uint32_t d = 0; d < bag.dim; ++d) EXPECT_EQ(id.row(region)[d], bag.row(i)[d]);
  }

  EmbeddingBag three;
  three.dim = 1;
  three.coords = {{0, 0}, {3, 0}, {2, 3}};
  three.values = {1, 2, 3};
  EXPECT_EQ(group_regions(three, 448).size(), 3u);
  EXPECT_THROW(group_regions(three, 300), ShapeError);
}

TEST(Regions, PreserveTotalPatchCount) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 100)(rng);
    const auto bag = testing_support::random_bag(rng, n, 3, 12);
    const std::uint32_t factor = std::uniform_int_distribution<std::uint32_t>(1, 5)(rng);
    const auto r = group_regions(bag, bag.tile_size * factor);
    EXPECT_EQ(std::accumulate(r.member_counts.begin(), r.member_counts.end(), 0u), static_cast<unsigned>(n));
    std::vector<double> per(r.size());
    std::iota(per.begin(), per.end(), 0.0);
    const auto back = broadcast_to_patches(r, per);
    for (std::size_t i = 0; i < bag.size(); ++i) EXPECT_EQ(back[i], r.patch_region[i]);
  }
}
