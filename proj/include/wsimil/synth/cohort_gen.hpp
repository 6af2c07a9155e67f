#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/embed/bag.hpp"
#include "wsimil/heatmap/cells.hpp"
#include "wsimil/slide/cohort.hpp"
#include "wsimil/synth/procedural_slide.hpp"

namespace wsimil::synth {

enum class SynthMode { Bags, Pixels };

struct SynthConfig {
  int n_patients = 60;
  int n_slides = 200;  // spread as evenly as possible over patients
  /// Share of patients with lesional (positive) slides.
  double positive_fraction = 0.5;
  /// Patch grid of every slide.
  int grid_cols = 12;
  int grid_rows = 12;
  int tile_size = 224;
  double microns_per_pixel = 0.5;
  std::array<double, 2> tissue_fraction{0.55, 0.8};
  /// Share of tissue patches inside the lesion on positive slides.
  std::array<double, 2> lesion_fraction{0.1, 0.1};
  std::array<double, 2> artefact_fraction{0.0, 0.0};
  // Embedding model (bag mode).
  int dim = 64;
  double signal_strength = 1.0;
  double prototype_scale = 0.8;
  double noise_sd = 0.5;  // norm of the per-patch noise vector, in expectation
  int prototypes = 6;
  /// Expected cells per patch and class (epithelial, neutrophil, lymphocyte,
  /// plasma, connective, eosinophil).
  std::array<double, heatmap::kCellClasses> normal_cell_rates{12, 1, 6, 3, 5, 1};
  std::array<double, heatmap::kCellClasses> lesion_cell_rates{12, 6, 10, 5, 5, 3};
  /// Positive slides whose manifest label is flipped to normal.
  int mislabeled_slides = 0;
  /// Permute patient labels after planting (null control).
  bool shuffle_labels = false;
  bool emit_cells = true;
  SynthMode mode = SynthMode::Bags;
  std::uint64_t seed = 42;

  /// Throws DataError for out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;

  static SynthConfig preset(const std::string& name);  // default, small, pixels, hif-null
};

/// Planted truth for one slide, on its patch grid.
struct SlideTruth {
  std::string slide_id;
  std::string patient_id;
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> tissue;
  std::vector<std::uint8_t> lesion;
  std::vector<std::uint8_t> artefact;  // at least half of the patch covered
  int planted_label = 0;               // lesion present
  int manifest_label = 0;              // label written to the manifest
  double planted_artefact_fraction = 0.0;

  bool at(const std::vector<std::uint8_t>& g, int c, int r) const {
    return g[static_cast<std::size_t>(r) * cols + c] != 0;
  }
  /// Accepted-tissue area in base pixels (tissue patches not marked artefact).
  double accepted_pixels(int tile_size) const;
};

struct GroundTruth {
  std::vector<SlideTruth> slides;
  const SlideTruth* find(const std::string& slide_id) const;
  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct SynthCohort {
  SynthConfig config;
  slide::CohortManifest manifest;  // image_path = slides/<id>.synth.json
  GroundTruth truth;
  std::vector<SlideLayout> layouts;
  std::vector<embed::EmbeddingBag> bags;  // bag mode only
  std::vector<heatmap::CellRecord> cells;
};

/// Deterministic in config.seed; slides are generated in parallel with
/// per-slide derived seeds.
SynthCohort generate_cohort(const SynthConfig& config, int workers = 1);

/// Writes manifest.csv, slides/, ground_truth.json, cells.csv, synth.json and,
/// in bag mode, bags/ and qc/ (QC summaries from the planted masks).
void write_cohort(const SynthCohort& cohort, const std::filesystem::path& dir);

GroundTruth load_ground_truth(const std::filesystem::path& path);

/// Manifest of n patients whose category marginals follow the SPARC-like
/// proportions: 65.7% CD; lesional 34%; per-diagnosis location mix; 1-4
/// slides per patient.
slide::CohortManifest stratification_cohort(int n_patients, std::uint64_t seed);

}  // namespace wsimil::synth
