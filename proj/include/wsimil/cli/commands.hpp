#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/synth/cohort_gen.hpp"

namespace wsimil::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = WSIMIL_VERSION;

/// Options shared by every stage. Results never depend on `workers`.
struct Common {
  std::uint64_t seed = 42;
  int workers = 1;
  bool quiet = false;
};

/// Every stage works inside a working directory:
///   manifest.csv, cells.csv, ground_truth.json   inputs (synth writes them)
///   qc/<slide>.json, qc/summary.csv              QC reports
///   tiles/<slide>.json                           kept tiles at level 1
///   tiles_ds<d>/                                 kept tiles at downsample d
///   bags/<slide>.wmbk                            embedding bags
///   splits/<task>.json                           fold assignment
///   models/<task>_<head>[_<filter>]/             checkpoints, cv_result.json, predictions
///   attention/<run>/                             overlays and per-slide scores
///   cells/, hif/, report/
struct QcOptions {
  fs::path work = ".";
  fs::path manifest;  // default: work/manifest.csv
  int tile_size = 224;
  int level_downsample = 1;
  int thumbnail_downsample = 0;
  int closing_radius = 2;
  bool export_png = false;
};

struct EmbedOptions {
  fs::path work = ".";
  fs::path manifest;
  fs::path tiles;  // default: work/tiles
  fs::path out;    // default: work/bags
  int dim = 64;
};

struct SplitOptions {
  fs::path work = ".";
  fs::path manifest;
  std::string task = "macroscopic";
  int folds = 5;
  std::vector<std::string> filters;
  fs::path out;  // default: work/splits/<task>.json
};

struct TrainOptions {
  fs::path work = ".";
  fs::path manifest;
  fs::path bags;  // default: work/bags
  std::string task = "macroscopic";
  std::string head = "dsmil";
  int folds = 5;
  fs::path splits;  // optional; computed from the (filtered) manifest otherwise
  std::vector<std::string> filters;
  fs::path out;  // default: work/models/<task>_<head>[_<filters>]
  // Overrides; negative means the head's default.
  int epochs = -1;
  double lr = -1;
  double weight_decay = -1;
  int model_dim = -1;
  int region_factor = -1;
  double dropout = -1;
};

struct EvalOptions {
  fs::path run;
  std::vector<std::string> filters;
  fs::path compare;  // second run for the paired t-test
  bool unpaired = false;
  fs::path out;  // default: run/eval[_<filters>].json
};

struct AttentionOptions {
  fs::path run;
  fs::path out;  // default: work/attention/<run name>
  double threshold = 0.5;
  fs::path annotations;   // directory of <slide>.json polygon files
  fs::path ground_truth;  // default: work/ground_truth.json when present
  int png_scale = 8;
};

struct CellsOptions {
  fs::path work = ".";
  fs::path manifest;
  fs::path cells;  // default: work/cells.csv
  fs::path out;    // default: work/cells
  std::vector<std::string> classes;  // default: all
  int tile_size = 224;
};

struct HifOptions {
  fs::path work = ".";
  fs::path manifest;
  fs::path cells;
  fs::path out;  // default: work/hif
  std::string level = "patient";
};

struct SynthOptions {
  fs::path out;
  synth::SynthConfig config;
};

struct ReportOptions {
  fs::path work = ".";
  fs::path out;  // default: work/report
};

struct PipelineOptions {
  fs::path out;
  std::string synth_preset;  // empty: use manifest
  fs::path manifest;
  fs::path cells;
  std::string task = "macroscopic";
  std::vector<std::string> heads{"dsmil", "transformer"};
  int folds = 5;
  int dsmil_epochs = -1;
  int transformer_epochs = -1;
  int region_factor = -1;
  int dim = 64;
};

void run_qc(const QcOptions& o, const Common& c);
void run_tile(const QcOptions& o, const Common& c);
void run_embed(const EmbedOptions& o, const Common& c);
void run_split(const SplitOptions& o, const Common& c);
/// Returns the run directory.
fs::path run_train(const TrainOptions& o, const Common& c);
nlohmann::json run_eval(const EvalOptions& o, const Common& c);
void run_attention(const AttentionOptions& o, const Common& c);
void run_cells(const CellsOptions& o, const Common& c);
void run_hif(const HifOptions& o, const Common& c);
void run_synth(const SynthOptions& o, const Common& c);
void run_report(const ReportOptions& o, const Common& c);
void run_pipeline(const PipelineOptions& o, const Common& c);

}  // namespace wsimil::cli
