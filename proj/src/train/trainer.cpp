#include "wsimil/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "wsimil/common/error.hpp"
#include "wsimil/common/parallel.hpp"
#include "wsimil/common/rng.hpp"
#include "wsimil/train/metrics.hpp"

namespace wsimil::train {

TrainResult train_head(const std::vector<const LabeledBag*>& slides, const mil::HeadConfig& config,
                       std::uint64_t seed) {
  if (slides.empty()) throw DataError("no training slides");
  TrainResult result;
  result.model = mil::make_head(config, derive_seed(seed, 1));
  nn::Adam optimizer(result.model->params(), config.optim);

  std::vector<std::size_t> order(slides.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const LabeledBag& s = *slides[order[step]];
      const std::uint64_t drop_seed = derive_seed(seed, (static_cast<std::uint64_t>(epoch) << 32) | step);
      double loss_value = 0.0;
      try {
        const auto pass = result.model->forward(s.bag.instances, true, drop_seed);
        const nn::Tensor loss = nn::bce_with_logits(pass.bag_logit, s.label);
        loss_value = loss.item();
        loss.backward();
        optimizer.step();
        optimizer.zero_grad();
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", slide " + s.bag.slide_id +
                           ": " + e.what());
      }
      total += loss_value;
    }
    result.loss_history.push_back(total / static_cast<double>(order.size()));
  }
  nn::round_to_float(result.model->params());
  return result;
}

nlohmann::json CvResult::to_json() const {
  nlohmann::json j;
  j["fold_auroc"] = fold_auroc;
  j["mean_auroc"] = mean;
  j["se_auroc"] = se;
  j["k"] = fold_auroc.size();
  j["loss_history"] = loss_history;
  return j;
}

CvResult cross_validate(const std::vector<LabeledBag>& data, const std::vector<FoldSplit>& folds,
                        const mil::HeadConfig& config, std::uint64_t seed, int workers) {
  const std::size_t k = folds.size();
  CvResult out;
  out.fold_auroc.resize(k);
  out.loss_history.resize(k);
  out.models.resize(k);
  std::vector<std::vector<Prediction>> fold_predictions(k);

  parallel_for(k, workers, [&](std::size_t f, int) {
    const std::set<std::string> train_ids(folds[f].train_patients.begin(), folds[f].train_patients.end());
    const std::set<std::string> test_ids(folds[f].test_patients.begin(), folds[f].test_patients.end());
    std::vector<const LabeledBag*> train_set, test_set;
    for (const auto& d : data) {
      if (train_ids.count(d.patient_id)) train_set.push_back(&d);
      else if (test_ids.count(d.patient_id)) test_set.push_back(&d);
    }
    if (test_set.empty()) throw DataError("fold " + std::to_string(f) + " has no test slides");
    auto trained = train_head(train_set, config, derive_seed(seed, f));
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto* s : test_set) {
      const double logit = trained.model->infer(s->bag.instances).bag_logit;
      const double prob = 1.0 / (1.0 + std::exp(-logit));
      fold_predictions[f].push_back({s->bag.slide_id, s->patient_id, static_cast<int>(f), s->label, logit, prob});
      scores.push_back(logit);
      labels.push_back(s->label);
    }
    try {
      out.fold_auroc[f] = auroc(scores, labels);
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(f) + ": " + e.what());
    }
    out.loss_history[f] = std::move(trained.loss_history);
    out.models[f] = std::move(trained.model);
  });
  for (auto& p : fold_predictions) out.predictions.insert(out.predictions.end(), p.begin(), p.end());
  std::tie(out.mean, out.se) = mean_and_se(out.fold_auroc);
  return out;
}

ConfusionReport misclassification_report(const std::vector<Prediction>& predictions, double threshold) {
  ConfusionReport r;
  r.threshold = threshold;
  for (const auto& p : predictions) {
    const ConfusionEntry e{p.slide_id, p.label, p.probability};
    const bool predicted = p.probability >= threshold;
    if (predicted && p.label == 1) r.tp.push_back(e);
    else if (!predicted && p.label == 0) r.tn.push_back(e);
    else if (predicted) r.fp.push_back(e);
    else r.fn.push_back(e);
  }
  r.confident_errors = r.fp;
  r.confident_errors.insert(r.confident_errors.end(), r.fn.begin(), r.fn.end());
  std::stable_sort(r.confident_errors.begin(), r.confident_errors.end(),
                   [threshold](const ConfusionEntry& a, const ConfusionEntry& b) {
                     const double ca = std::abs(a.probability - threshold), cb = std::abs(b.probability - threshold);
                     if (ca != cb) return ca > cb;
                     return a.slide_id < b.slide_id;
                   });
  return r;
}

}  // namespace wsimil::train
