#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/mil/heads.hpp"
#include "wsimil/train/folds.hpp"

namespace wsimil::train {

struct LabeledBag {
  mil::PreparedBag bag;
  std::string patient_id;
  int label = 0;
};

struct TrainResult {
  std::unique_ptr<mil::MilHead> model;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// Batch-size-1 training with binary cross-entropy on the bag logit. Slide
/// order is reshuffled each epoch from `seed`; dropout masks derive from
/// (seed, epoch, step). Parameters are rounded to float precision at the end
/// so a saved checkpoint reproduces the returned model exactly.
TrainResult train_head(const std::vector<const LabeledBag*>& slides, const mil::HeadConfig& config,
                       std::uint64_t seed);

struct Prediction {
  std::string slide_id;
  std::string patient_id;
  int fold = 0;
  int label = 0;
  double logit = 0.0;
  double probability = 0.0;
};

struct CvResult {
  std::vector<double> fold_auroc;
  double mean = 0.0;
  double se = 0.0;
  std::vector<Prediction> predictions;  // fold order, then slide order
  std::vector<std::vector<double>> loss_history;
  std::vector<std::unique_ptr<mil::MilHead>> models;

  nlohmann::json to_json() const;
};

/// Trains one model per fold (folds run in parallel on up to `workers`
/// threads) and scores the held-out patients' slides. Fold f uses seed
/// derive_seed(seed, f).
CvResult cross_validate(const std::vector<LabeledBag>& data, const std::vector<FoldSplit>& folds,
                        const mil::HeadConfig& config, std::uint64_t seed, int workers);

struct ConfusionEntry {
  std::string slide_id;
  int label = 0;
  double probability = 0.0;
};

struct ConfusionReport {
  double threshold = 0.5;
  std::vector<ConfusionEntry> tp, tn, fp, fn;
  /// FP and FN ordered by |probability - threshold|, most confident first.
  std::vector<ConfusionEntry> confident_errors;
};

ConfusionReport misclassification_report(const std::vector<Prediction>& predictions, double threshold = 0.5);

}  // namespace wsimil::train
