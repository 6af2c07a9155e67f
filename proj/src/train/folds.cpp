#include "wsimil/train/folds.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <tuple>

#include "wsimil/common/error.hpp"
#include "wsimil/common/rng.hpp"

namespace wsimil::train {

namespace {

template <typename E, std::size_t N>
E most_frequent(const std::array<int, N>& counts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < N; ++i)
    if (counts[i] > counts[best]) best = i;
  return static_cast<E>(best);
}

}  // namespace

std::vector<PatientSummary> summarize_patients(const slide::CohortManifest& manifest, slide::Task task) {
  struct Acc {
    std::array<int, 4> location{};
    std::array<int, 2> diagnosis{};
    std::array<int, 3> macroscopic{};
    bool labelled = false;
    int target = 0;
  };
  std::map<std::string, Acc> acc;
  std::vector<std::string> order;
  for (const auto& r : manifest.records) {
    auto [it, inserted] = acc.try_emplace(r.patient_id);
    if (inserted) order.push_back(r.patient_id);
    auto& a = it->second;
    ++a.location[static_cast<int>(r.location)];
    ++a.diagnosis[static_cast<int>(r.diagnosis)];
    ++a.macroscopic[static_cast<int>(r.macroscopic)];
    if (auto label = slide::derive_label(r, task)) {
      a.labelled = true;
      a.target = std::max(a.target, label->label);
    }
  }
  std::vector<PatientSummary> out;
  for (const auto& id : order) {
    const auto& a = acc.at(id);
    if (!a.labelled) continue;
    out.push_back({id, most_frequent<slide::BiopsyLocation>(a.location), most_frequent<slide::Diagnosis>(a.diagnosis),
                   most_frequent<slide::Macroscopic>(a.macroscopic), a.target});
  }
  return out;
}

std::vector<FoldSplit> stratified_kfold(const slide::CohortManifest& manifest, slide::Task task, int k,
                                        std::uint64_t seed, std::vector<std::string>* warnings) {
  if (k < 2) throw DataError("number of folds must be at least 2");
  const auto patients = summarize_patients(manifest, task);
  if (static_cast<int>(patients.size()) < k)
    throw DataError("only " + std::to_string(patients.size()) + " patients have labels for task " +
                    std::string(slide::to_string(task)) + "; need at least " + std::to_string(k));

  std::map<std::string, std::vector<const PatientSummary*>> strata;
  for (const auto& p : patients) {
    const std::string key = std::string(slide::to_string(p.location)) + "|" +
                            std::string(slide::to_string(p.diagnosis)) + "|" + std::to_string(p.target);
    strata[key].push_back(&p);
  }
  std::vector<std::pair<std::string, std::vector<const PatientSummary*>>> ordered(strata.begin(), strata.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) folds[f].fold_index = f;
  std::vector<int> fold_of(patients.size());
  std::size_t counter = 0;
  for (auto& [key, members] : ordered) {
    if (warnings && static_cast<int>(members.size()) < k)
      warnings->push_back("stratum " + key + " has " + std::to_string(members.size()) + " patients, fewer than " +
                          std::to_string(k) + " folds");
    std::sort(members.begin(), members.end(), [seed](const PatientSummary* a, const PatientSummary* b) {
      const auto ha = mix64(seed ^ hash_string(a->patient_id));
      const auto hb = mix64(seed ^ hash_string(b->patient_id));
      return std::tie(ha, a->patient_id) < std::tie(hb, b->patient_id);
    });
    for (const auto* p : members) folds[counter++ % k].test_patients.push_back(p->patient_id);
  }
  for (auto& f : folds) {
    std::sort(f.test_patients.begin(), f.test_patients.end());
    const std::set<std::string> test(f.test_patients.begin(), f.test_patients.end());
    for (const auto& p : patients)
      if (!test.count(p.patient_id)) f.train_patients.push_back(p.patient_id);
    std::sort(f.train_patients.begin(), f.train_patients.end());
  }
  return folds;
}

std::vector<CategoryBalance> stratification_report(const std::vector<PatientSummary>& patients,
                                                   const std::vector<FoldSplit>& folds) {
  std::map<std::string, std::map<std::string, std::string>> by_patient;
  for (const auto& p : patients) {
    auto& attrs = by_patient[p.patient_id];
    attrs["location"] = slide::to_string(p.location);
    attrs["diagnosis"] = slide::to_string(p.diagnosis);
    attrs["macroscopic"] = slide::to_string(p.macroscopic);
    attrs["target"] = std::to_string(p.target);
  }
  std::map<std::string, int> cohort_counts;
  for (const auto& [id, attrs] : by_patient)
    for (const auto& [key, value] : attrs) ++cohort_counts[key + "=" + value];

  auto proportions = [&](const std::vector<std::string>& ids) {
    std::map<std::string, double> out;
    for (const auto& id : ids)
      for (const auto& [key, value] : by_patient.at(id)) out[key + "=" + value] += 1.0;
    for (auto& [cat, v] : out) v /= static_cast<double>(ids.size());
    return out;
  };

  std::vector<CategoryBalance> report;
  for (const auto& [cat, count] : cohort_counts) {
    CategoryBalance b;
    b.category = cat;
    b.cohort_count = count;
    b.cohort_proportion = static_cast<double>(count) / static_cast<double>(patients.size());
    report.push_back(std::move(b));
  }
  for (const auto& f : folds) {
    const auto train = proportions(f.train_patients);
    const auto test = proportions(f.test_patients);
    for (auto& b : report) {
      b.train_proportion.push_back(train.count(b.category) ? train.at(b.category) : 0.0);
      b.test_proportion.push_back(test.count(b.category) ? test.at(b.category) : 0.0);
    }
  }
  return report;
}

nlohmann::json folds_to_json(const std::vector<FoldSplit>& folds, slide::Task task, std::uint64_t seed) {
  nlohmann::json j;
  j["task"] = slide::to_string(task);
  j["seed"] = seed;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds)
    j["folds"].push_back({{"fold", f.fold_index}, {"train", f.train_patients}, {"test", f.test_patients}});
  return j;
}

std::vector<FoldSplit> folds_from_json(const nlohmann::json& j) {
  std::vector<FoldSplit> out;
  try {
    for (const auto& f : j.at("folds"))
      out.push_back({f.at("fold").get<int>(), f.at("train").get<std::vector<std::string>>(),
                     f.at("test").get<std::vector<std::string>>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid splits file: ") + e.what());
  }
  return out;
}

}  // namespace wsimil::train
