#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/embed/bag.hpp"
#include "wsimil/qc/extract.hpp"
#include "wsimil/synth/cohort_gen.hpp"
#include "wsimil/synth/procedural_slide.hpp"
#include "wsimil/train/folds.hpp"
#include "wsimil/train/trainer.hpp"

using namespace wsimil;
using namespace wsimil::synth;

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SlideLayout tissue_layout(std::uint64_t seed) {
  auto layout = SlideLayout::blank("a", 224 * 8, 224 * 8, 224, seed);
  layout.fill_tissue_rect(1, 1, 7, 7);
  for (int r = 3; r < 5; ++r)
    for (int c = 3; c < 5; ++c) layout.set_lesion(c, r, true);
  return layout;
}

}  // namespace

TEST(Cohort, LesionFractionOnTenByTenGrid) {
  auto cfg = SynthConfig::preset("small");
  cfg.grid_cols = cfg.grid_rows = 10;
  cfg.tissue_fraction = {1.0, 1.0};
  cfg.lesion_fraction = {0.1, 0.1};
  const auto c = generate_cohort(cfg);
  int positives = 0;
  for (const auto& t : c.truth.slides) {
    int lesion = 0;
    for (auto v : t.lesion) lesion += v;
    if (t.planted_label) {
      ++positives;
      EXPECT_NEAR(lesion, 10, 1);
    } else {
      EXPECT_EQ(lesion, 0);
    }
  }
  EXPECT_GT(positives, 0);
}

TEST(Cohort, LabelsMatchLesionMasks) {
  const auto c = generate_cohort(SynthConfig::preset("small"));
  ASSERT_EQ(c.truth.slides.size(), c.manifest.records.size());
  for (std::size_t i = 0; i < c.manifest.records.size(); ++i) {
    const auto& t = c.truth.slides[i];
    int lesion = 0;
    for (auto v : t.lesion) lesion += v;
    EXPECT_EQ(t.planted_label, lesion > 0 ? 1 : 0);
    EXPECT_EQ(t.manifest_label, t.planted_label);
    EXPECT_EQ(slide::derive_label(c.manifest.records[i], slide::Task::Macroscopic)->label, t.manifest_label);
  }
}

TEST(Cohort, NeutrophilsConcentrateInLesions) {
  auto cfg = SynthConfig::preset("small");
  const auto c = generate_cohort(cfg);
  double lesion_cells = 0, lesion_patches = 0, normal_cells = 0, normal_patches = 0;
  for (std::size_t s = 0; s < c.truth.slides.size(); ++s) {
    const auto& t = c.truth.slides[s];
    std::vector<int> counts(static_cast<std::size_t>(t.cols) * t.rows, 0);
    for (const auto& cell : c.cells)
      if (cell.slide_id == t.slide_id && cell.cell_class == heatmap::CellClass::Neutrophil)
        ++counts[static_cast<std::size_t>(cell.y / cfg.tile_size) * t.cols + static_cast<std::size_t>(cell.x / cfg.tile_size)];
    for (int r = 0; r < t.rows; ++r)
      for (int col = 0; col < t.cols; ++col) {
        if (!t.at(t.tissue, col, r)) continue;
        const double n = counts[static_cast<std::size_t>(r) * t.cols + col];
        if (t.at(t.lesion, col, r)) {
          lesion_cells += n;
          lesion_patches += 1;
        } else {
          normal_cells += n;
          normal_patches += 1;
        }
      }
  }
  EXPECT_GT(lesion_cells / lesion_patches, 3 * normal_cells / normal_patches);
}

TEST(Cohort, SameSeedIsBitIdentical) {
  testing_support::TempDir a("synth_a"), b("synth_b");
  auto cfg = SynthConfig::preset("small");
  write_cohort(generate_cohort(cfg, 1), a.path());
  write_cohort(generate_cohort(cfg, 3), b.path());
  for (const auto* f : {"manifest.csv", "ground_truth.json", "cells.csv", "synth.json"})
    EXPECT_EQ(read_all(a.path() / f), read_all(b.path() / f)) << f;
  const auto c = generate_cohort(cfg);
  for (const auto& r : c.manifest.records)
    EXPECT_EQ(read_all(a.path() / "bags" / (r.slide_id + ".wmbk")), read_all(b.path() / "bags" / (r.slide_id + ".wmbk")));
  cfg.seed = 43;
  testing_support::TempDir d("synth_d");
  write_cohort(generate_cohort(cfg), d.path());
  EXPECT_NE(read_all(a.path() / "ground_truth.json"), read_all(d.path() / "ground_truth.json"));
}

TEST(Cohort, GroundTruthRoundTrip) {
  const auto c = generate_cohort(SynthConfig::preset("small"));
  const auto back = GroundTruth::from_json(c.truth.to_json());
  EXPECT_EQ(back.to_json(), c.truth.to_json());
  ASSERT_NE(back.find(c.truth.slides[3].slide_id), nullptr);
}

TEST(Cohort, NoSignalIsChanceLevel) {
  auto cfg = SynthConfig::preset("default");
  cfg.n_patients = 40;
  cfg.n_slides = 80;
  cfg.dim = 32;
  cfg.signal_strength = 0.0;
  const auto c = generate_cohort(cfg);
  auto head = mil::HeadConfig::defaults(mil::HeadType::Dsmil, 32);
  head.epochs = 40;
  std::vector<train::LabeledBag> data;
  for (std::size_t i = 0; i < c.bags.size(); ++i)
    data.push_back({mil::prepare_bag(c.bags[i], head), c.manifest.records[i].patient_id, c.truth.slides[i].manifest_label});
  const auto folds = train::stratified_kfold(c.manifest, slide::Task::Macroscopic, 5, 1);
  const auto cv = train::cross_validate(data, folds, head, 1, 1);
  EXPECT_GT(cv.mean, 0.3);
  EXPECT_LT(cv.mean, 0.7);
}

TEST(Cohort, InvalidConfig) {
  auto cfg = SynthConfig::preset("small");
  cfg.positive_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), DataError);
  EXPECT_THROW(SynthConfig::preset("huge"), DataError);
}

TEST(Artefacts, ZeroFractionPlantsNothing) {
  auto layout = tissue_layout(1);
  EXPECT_EQ(plant_artefacts(layout, 0.0, 1), 0);
  EXPECT_EQ(layout.artefact_area(), 0);
}

TEST(Artefacts, AreaMatchesFraction) {
  for (double f : {0.1, 0.25, 0.45, 0.55, 0.8}) {
    auto layout = tissue_layout(2);
    plant_artefacts(layout, f, 3);
    EXPECT_NEAR(static_cast<double>(layout.artefact_area()) / static_cast<double>(layout.tissue_area()), f, 0.02) << f;
  }
}

TEST(Artefacts, QcReportsPlantedFraction) {
  for (double f : {0.25, 0.45, 0.55}) {
    auto layout = tissue_layout(4);
    plant_artefacts(layout, f, 5);
    ProceduralSlide slide(layout);
    const auto run = qc::run_slide_qc(slide, "a", qc::ExtractionParams{});
    EXPECT_NEAR(run.summary.tissue_fraction_rejected, f, 0.03) << f;
    EXPECT_EQ(run.summary.excluded, f > 0.5) << f;
  }
}

TEST(Layout, JsonRoundTrip) {
  testing_support::TempDir dir("layout");
  auto layout = tissue_layout(6);
  plant_artefacts(layout, 0.3, 2);
  save_slide_layout(dir.path() / "a.synth.json", layout);
  const auto back = load_slide_layout(dir.path() / "a.synth.json");
  EXPECT_EQ(back.tissue, layout.tissue);
  EXPECT_EQ(back.lesion, layout.lesion);
  ASSERT_EQ(back.artefacts.size(), layout.artefacts.size());
  qc::RgbImage a, b;
  ProceduralSlide(layout).read_region(300, 300, 400, 400, 1, a);
  qc::open_slide(dir.path() / "a.synth.json")->read_region(300, 300, 400, 400, 1, b);
  EXPECT_EQ(a.pixels, b.pixels);
}

TEST(StratificationCohort, Marginals) {
  const auto m = stratification_cohort(638, 1);
  EXPECT_EQ(m.patients().size(), 638u);
  const auto patients = train::summarize_patients(m, slide::Task::Macroscopic);
  int cd = 0;
  for (const auto& p : patients) cd += p.diagnosis == slide::Diagnosis::CD;
  EXPECT_NEAR(cd / 638.0, 0.657, 0.05);
}
