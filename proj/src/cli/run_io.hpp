#pragma once

#include <map>
#include <memory>
#include <vector>

#include "wsimil/cli/workspace.hpp"
#include "wsimil/mil/heads.hpp"
#include "wsimil/train/folds.hpp"

namespace wsimil::cli::detail {

/// A training run directory with its resolved options.
struct LoadedRun {
  fs::path dir;
  fs::path work;
  fs::path manifest;
  fs::path bags;
  slide::Task task = slide::Task::Macroscopic;
  mil::HeadConfig config;
  std::vector<train::FoldSplit> folds;
  std::uint64_t seed = 0;
};

LoadedRun load_run(const fs::path& dir);
std::unique_ptr<mil::MilHead> load_fold_model(const LoadedRun& run, int fold);

/// Records usable for a task: labelled and not excluded by QC.
std::vector<slide::SlideRecord> usable_records(const slide::CohortManifest& manifest, slide::Task task,
                                               const std::map<std::string, qc::QcSummary>& qc_summaries);

}  // namespace wsimil::cli::detail
