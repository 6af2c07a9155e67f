#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/slide/cohort.hpp"

namespace wsimil::train {

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_patients;  // sorted
  std::vector<std::string> test_patients;   // sorted
};

/// Patient-level attributes used for stratification and reporting.
struct PatientSummary {
  std::string patient_id;
  slide::BiopsyLocation location;     // most frequent over slides, ties to the lower enum value
  slide::Diagnosis diagnosis;         // most frequent, ties to CD
  slide::Macroscopic macroscopic;     // most frequent, ties to the lower enum value
  int target = 0;                     // 1 when any labelled slide is positive
};

/// Patients with at least one slide labelled for `task`, in first-appearance order.
std::vector<PatientSummary> summarize_patients(const slide::CohortManifest& manifest, slide::Task task);

/// Stratum = location x diagnosis x target. Strata are visited by
/// (size ascending, key); inside a stratum patients are ordered by a seeded
/// hash of their id. Patients are then dealt to folds by one running counter
/// across strata, so every stratum spreads over consecutive folds.
/// Throws DataError with fewer than k eligible patients; strata smaller than
/// k produce a warning.
std::vector<FoldSplit> stratified_kfold(const slide::CohortManifest& manifest, slide::Task task, int k,
                                        std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct CategoryBalance {
  std::string category;  // e.g. "location=colon"
  int cohort_count = 0;
  double cohort_proportion = 0.0;
  std::vector<double> train_proportion;  // per fold
  std::vector<double> test_proportion;
};

/// Proportions of every location, diagnosis, macroscopic and target category.
std::vector<CategoryBalance> stratification_report(const std::vector<PatientSummary>& patients,
                                                   const std::vector<FoldSplit>& folds);

nlohmann::json folds_to_json(const std::vector<FoldSplit>& folds, slide::Task task, std::uint64_t seed);
std::vector<FoldSplit> folds_from_json(const nlohmann::json& j);

}  // namespace wsimil::train
