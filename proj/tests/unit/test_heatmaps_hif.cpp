#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/common/png_io.hpp"
#include "wsimil/heatmap/attention_map.hpp"
#include "wsimil/heatmap/cells.hpp"

using namespace wsimil;
using namespace wsimil::heatmap;

using testing_support::enumeration_p;

namespace {

CellRecord cell(double x, double y, CellClass c) { return {"s", x, y, c}; }

qc::TileGrid grid(int cols, int rows, int tile = 100) {
  qc::TileGrid g;
  g.slide_width = std::int64_t{cols} * tile;
  g.slide_height = std::int64_t{rows} * tile;
  g.tile_size = tile;
  return g;
}

}  // namespace

TEST(Raster, DirectPlacementAndPermutation) {
  const std::vector<double> att{0, 1.0 / 3, 2.0 / 3, 1};
  const std::vector<qc::TileCoord> coords{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const auto map = rasterize_attention("s", att, coords, 2, 2);
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(map.values[i], static_cast<float>(att[i]));
  const std::vector<double> att2{1, 0, 2.0 / 3, 1.0 / 3};
  const std::vector<qc::TileCoord> coords2{{1, 1}, {0, 0}, {0, 1}, {1, 0}};
  EXPECT_EQ(rasterize_attention("s", att2, coords2, 2, 2).values, map.values);
  const auto single = rasterize_attention("s", std::vector<double>{0.5}, std::vector<qc::TileCoord>{{2, 1}}, 3, 3);
  int finite = 0;
  for (float v : single.values) finite += v != kNoTissue;
  EXPECT_EQ(finite, 1);
  EXPECT_THROW(rasterize_attention("s", att, coords, 1, 2), ShapeError);
}

TEST(Raster, ThresholdExamples) {
  AttentionMap m;
  m.cols = 4;
  m.rows = 1;
  m.values = {0.2f, 0.5f, 0.7f, kNoTissue};
  const auto t = threshold_map(m, 0.5);
  EXPECT_EQ(t.values, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(threshold_map(m, 0.0).count(), 3u);
  m.values = {0.2f, 1.0f, 0.7f, kNoTissue};
  EXPECT_EQ(threshold_map(m, 1.0).values, (std::vector<std::uint8_t>{0, 1, 0, 0}));
}

TEST(Raster, DiceExamplesAndOracle) {
  GridMask a(5, 2), b(5, 2);
  EXPECT_DOUBLE_EQ(dice(a, b), 1.0);
  for (int c = 0; c < 4; ++c) a.set(c, 0, true);
  for (int c = 2; c < 5; ++c) b.set(c, 0, true);
  for (int c = 2; c < 5; ++c) b.set(c, 1, true);
  EXPECT_DOUBLE_EQ(dice(a, b), 0.4);
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  GridMask c(5, 2);
  c.set(4, 1, true);
  EXPECT_DOUBLE_EQ(dice(a, c), 0.0);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    GridMask x(7, 6), y(7, 6);
    for (auto& v : x.values) v = rng() % 2;
    for (auto& v : y.values) v = rng() % 2;
    int nx = 0, ny = 0, both = 0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
      nx += x.values[i];
      ny += y.values[i];
      both += x.values[i] && y.values[i];
    }
    const double oracle = nx + ny == 0 ? 1.0 : 2.0 * both / (nx + ny);
    ASSERT_EQ(dice(x, y), oracle);
    ASSERT_EQ(dice(x, y), dice(y, x));
  }
  EXPECT_THROW(dice(GridMask(2, 2), GridMask(3, 2)), ShapeError);
}

TEST(Raster, PngAndCsvOutputs) {
  testing_support::TempDir dir("raster");
  AttentionMap m;
  m.cols = 3;
  m.rows = 2;
  m.values = {0.0f, 0.5f, 1.0f, kNoTissue, 0.25f, kNoTissue};
  write_attention_png(dir.path() / "a.png", m, 4);
  const auto img = read_png(dir.path() / "a.png");
  EXPECT_EQ(img.width, 12);
  EXPECT_EQ(img.height, 8);
  write_attention_csv(dir.path() / "a.csv", m);
  std::ifstream in(dir.path() / "a.csv");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  const auto lo = viridis(0.0), hi = viridis(1.0);
  EXPECT_LT(lo[1], hi[1]);
}

TEST(Annotations, RectangleCoversCells) {
  testing_support::TempDir dir("ann");
  {
    std::ofstream out(dir.path() / "a.json");
    out << R"({"polygons": [[[100, 100], [300, 100], [300, 200], [100, 200]]]})";
  }
  const auto rings = load_annotations(dir.path() / "a.json");
  ASSERT_EQ(rings.size(), 1u);
  const auto mask = rasterize_annotations(rings, 4, 4, 100);
  EXPECT_EQ(mask.count(), 2u);
  EXPECT_TRUE(mask.get(1, 1));
  EXPECT_TRUE(mask.get(2, 1));
  // A ring covering under half of a cell does not mark it.
  const auto thin = rasterize_annotations({{{0, 0}, {40, 0}, {40, 100}, {0, 100}}}, 2, 2, 100);
  EXPECT_EQ(thin.count(), 0u);
}

TEST(CellHeatmapTest, Examples) {
  std::vector<CellRecord> cells;
  for (int i = 0; i < 10; ++i) cells.push_back(cell(150 + i, 120, CellClass::Neutrophil));
  const auto hm = cell_density_heatmap(cells, grid(3, 2), CellClass::Neutrophil, 0.5);
  EXPECT_EQ(hm.counts[1 * 3 + 1], 10);
  EXPECT_EQ(std::accumulate(hm.counts.begin(), hm.counts.end(), 0), 10);
  // 100 px at 0.5 um/px is 50 um, so 0.0025 mm^2 per tile.
  EXPECT_NEAR(hm.densities[1 * 3 + 1], 10 / 0.0025, 1e-6);
  const auto empty = cell_density_heatmap({}, grid(3, 2), CellClass::Neutrophil, 0.5);
  EXPECT_EQ(std::accumulate(empty.counts.begin(), empty.counts.end(), 0), 0);
  const auto edge = cell_density_heatmap(std::vector<CellRecord>{cell(200, 100, CellClass::Neutrophil)}, grid(3, 2),
                                         CellClass::Neutrophil, 0.5);
  EXPECT_EQ(edge.counts[1 * 3 + 2], 1);
}

TEST(CellHeatmapTest, ClassCountsSumToInBoundsTotal) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50, 450);
  std::vector<CellRecord> cells;
  int inside = 0;
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng), y = u(rng);
    cells.push_back(cell(x, y, static_cast<CellClass>(rng() % kCellClasses)));
    inside += x >= 0 && y >= 0 && x < 400 && y < 300;
  }
  int total = 0;
  for (int k = 0; k < kCellClasses; ++k) {
    const auto hm = cell_density_heatmap(cells, grid(4, 3), static_cast<CellClass>(k), 0.5);
    total += std::accumulate(hm.counts.begin(), hm.counts.end(), 0);
  }
  EXPECT_EQ(total, inside);
}

TEST(CellsCsv, RoundTripAndRowErrors) {
  std::vector<CellRecord> cells{cell(1.5, 2.25, CellClass::Plasma), cell(10, 20, CellClass::Eosinophil)};
  std::stringstream s;
  write_cells(s, cells);
  const auto back = read_cells(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].cell_class, CellClass::Eosinophil);
  EXPECT_DOUBLE_EQ(back[0].y, 2.25);
  std::istringstream bad(std::string(kCellsHeader) + "\ns,1,2,neutrophil\ns,x,2,neutrophil\ns,1,2,macrophage\n");
  try {
    read_cells(bad);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  }
}

TEST(Hif, Examples) {
  std::vector<CellRecord> cells;
  for (int i = 0; i < 10; ++i) cells.push_back(cell(0, 0, CellClass::Neutrophil));
  for (int i = 0; i < 90; ++i) cells.push_back(cell(0, 0, CellClass::Epithelial));
  // 2 mm^2 at 0.5 um/px is 8e6 pixels.
  const auto h = compute_hifs("s", cells, 8e6, 0.5);
  EXPECT_NEAR((*h.ratios)[static_cast<int>(CellClass::Neutrophil)], 0.1, 1e-12);
  EXPECT_NEAR(h.accepted_area_mm2, 2.0, 1e-12);
  EXPECT_NEAR(h.total_density, 50.0, 1e-9);
  EXPECT_NEAR(*hif_feature(h, "neutrophil_ratio"), 0.1, 1e-12);
  EXPECT_FALSE(compute_hifs("e", {}, 8e6, 0.5).ratios.has_value());
  EXPECT_FALSE(hif_feature(compute_hifs("e", {}, 8e6, 0.5), "neutrophil_ratio").has_value());
}

TEST(Hif, RatiosFormProbabilityVector) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CellRecord> cells;
    const int n = std::uniform_int_distribution<int>(1, 300)(rng);
    for (int i = 0; i < n; ++i) cells.push_back(cell(0, 0, static_cast<CellClass>(rng() % kCellClasses)));
    const auto h = compute_hifs("s", cells, 1e6, 0.5);
    double s = 0;
    for (double r : *h.ratios) {
      ASSERT_GE(r, 0.0);
      s += r;
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(MannWhitneyTest, Examples) {
  const auto r = hif_group_test(std::vector<double>{1, 2, 3}, std::vector<double>{10, 11, 12});
  EXPECT_DOUBLE_EQ(r.u, 0.0);
  EXPECT_NEAR(r.p, 0.1, 1e-12);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(hif_group_test(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}).p, 1.0);
  EXPECT_THROW(hif_group_test(std::vector<double>{}, std::vector<double>{1, 2}), DataError);
}

TEST(MannWhitneyTest, ExactModeMatchesEnumeration) {
  std::mt19937_64 rng(6);
  for (int na = 1; na <= 8; ++na)
    for (int nb = 1; nb <= 8; ++nb)
      for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> a(na), b(nb);
        const bool ties = trial != 0;
        for (double& v : a) v = ties ? static_cast<double>(rng() % 4) : std::uniform_real_distribution<double>()(rng);
        for (double& v : b) v = ties ? static_cast<double>(rng() % 4) + 0.5 * (trial == 2) : std::uniform_real_distribution<double>()(rng);
        const auto r = hif_group_test(a, b);
        ASSERT_TRUE(r.exact);
        ASSERT_EQ(r.p, enumeration_p(a, b)) << na << "," << nb << " trial " << trial;
      }
}

TEST(MannWhitneyTest, NormalApproximationMatchesPermutation) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> a(30), b(30);
    for (double& v : a) v = std::round(g(rng) * 4) / 4;
    for (double& v : b) v = std::round((g(rng) + 0.3 * trial) * 4) / 4;
    const auto r = hif_group_test(a, b);
    ASSERT_FALSE(r.exact);
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    auto u_stat = [](const std::vector<double>& x, const std::vector<double>& y) {
      double u = 0;
      for (double p : x)
        for (double q : y) u += p > q ? 1.0 : p == q ? 0.5 : 0.0;
      return u;
    };
    const double mu = 450.0, observed = std::abs(u_stat(a, b) - mu);
    EXPECT_DOUBLE_EQ(r.u, u_stat(a, b));
    int hits = 0;
    const int reps = 20000;
    for (int rep = 0; rep < reps; ++rep) {
      std::shuffle(pooled.begin(), pooled.end(), rng);
      const std::vector<double> x(pooled.begin(), pooled.begin() + 30), y(pooled.begin() + 30, pooled.end());
      hits += std::abs(u_stat(x, y) - mu) >= observed - 1e-9;
    }
    EXPECT_NEAR(r.p, static_cast<double>(hits) / reps, 0.02) << trial;
  }
}
