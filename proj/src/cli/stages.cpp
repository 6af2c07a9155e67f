#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wsimil/cli/commands.hpp"
#include "wsimil/cli/workspace.hpp"
#include "run_io.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/common/parallel.hpp"
#include "wsimil/common/png_io.hpp"
#include "wsimil/embed/pseudo_encoder.hpp"
#include "wsimil/qc/qc_io.hpp"
#include "wsimil/train/metrics.hpp"
#include "wsimil/train/trainer.hpp"

namespace wsimil::cli {

namespace {

nlohmann::json paths_json(const std::vector<std::string>& v) { return v; }

void qc_stage(const QcOptions& o, const Common& c, bool write_reports, const fs::path& tiles_dir,
              const std::string& command) {
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const auto manifest = slide::load_manifest(manifest_path);
  qc::ExtractionParams params;
  params.tile_size = o.tile_size;
  params.level_downsample = o.level_downsample;
  params.thumbnail_downsample = o.thumbnail_downsample;
  params.tissue.closing_radius = o.closing_radius;
  params.workers = 1;
  fs::create_directories(tiles_dir);
  if (write_reports) fs::create_directories(o.work / "qc");

  const auto& records = manifest.records;
  std::vector<qc::QcSummary> summaries(records.size());
  parallel_for(records.size(), c.workers, [&](std::size_t i, int) {
    const auto& r = records[i];
    const auto source = qc::open_slide(resolve_image(manifest_path, r));
    const auto run = qc::run_slide_qc(*source, r.slide_id, params);
    for (const auto& w : run.warnings) spdlog::warn("{}: {}", r.slide_id, w);
    if (write_reports) qc::write_qc_report(o.work / "qc" / (r.slide_id + ".json"), run);
    const auto list = qc::kept_tiles(run, r.slide_id, r.image_path);
    qc::write_tile_list(tiles_dir / (r.slide_id + ".json"), list);
    if (o.export_png) {
      const fs::path dir = tiles_dir / r.slide_id;
      fs::create_directories(dir);
      qc::RgbImage tile;
      for (const auto& t : list.tiles) {
        const auto g = list.grid();
        source->read_region(g.origin_x(t), g.origin_y(t), o.tile_size, o.tile_size, o.level_downsample, tile);
        write_png(dir / fmt::format("{}_{}.png", t.col, t.row), tile);
      }
    }
    summaries[i] = run.summary;
    spdlog::info("{} {}: {} tiles kept, rejected fraction {:.3f}{}", command, r.slide_id, list.tiles.size(),
                 run.summary.tissue_fraction_rejected, run.summary.excluded ? " (excluded)" : "");
  });

  if (write_reports) {
    std::ostringstream csv;
    csv << "slide_id,background,accepted,artefact,tissue_fraction_rejected,excluded,patches,kept_patches\n";
    for (const auto& s : summaries)
      csv << s.slide_id << ',' << num(s.background) << ',' << num(s.accepted) << ',' << num(s.artefact) << ','
          << num(s.tissue_fraction_rejected) << ',' << (s.excluded ? 1 : 0) << ',' << s.patches << ','
          << s.kept_patches << '\n';
    write_text_file(o.work / "qc" / "summary.csv", csv.str());
  }
  write_run_json(write_reports ? o.work / "qc" : tiles_dir, command,
                 {{"manifest", manifest_path.string()},
                  {"tile_size", o.tile_size},
                  {"level_downsample", o.level_downsample},
                  {"thumbnail_downsample", o.thumbnail_downsample},
                  {"closing_radius", o.closing_radius},
                  {"export_png", o.export_png},
                  {"tiles", tiles_dir.string()},
                  {"seed", c.seed},
                  {"workers", c.workers}});
}

}  // namespace

void run_qc(const QcOptions& o, const Common& c) {
  QcOptions level0 = o;
  level0.level_downsample = 1;
  qc_stage(level0, c, true, o.work / "tiles", "qc");
}

void run_tile(const QcOptions& o, const Common& c) {
  if (o.level_downsample < 1) throw DataError("--downsample must be >= 1");
  const fs::path dir = o.level_downsample == 1 ? o.work / "tiles" : o.work / fmt::format("tiles_ds{}", o.level_downsample);
  qc_stage(o, c, false, dir, "tile");
}

void run_embed(const EmbedOptions& o, const Common& c) {
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const fs::path tiles_dir = or_default(o.tiles, o.work / "tiles");
  const fs::path out = or_default(o.out, o.work / "bags");
  const auto manifest = slide::load_manifest(manifest_path);
  const auto qc_summaries = load_qc_summaries(o.work);
  fs::create_directories(out);
  const std::string encoder = embed::pseudo_encoder_id(c.seed, o.dim);
  for (const auto& r : manifest.records) {
    if (auto it = qc_summaries.find(r.slide_id); it != qc_summaries.end() && it->second.excluded) {
      spdlog::info("embed {}: skipped, excluded by QC", r.slide_id);
      continue;
    }
    const fs::path list_path = tiles_dir / (r.slide_id + ".json");
    if (!fs::exists(list_path))
      throw DataError("missing tile list for slide " + r.slide_id + " in " + tiles_dir.string() + "; run `qc` or `tile` first");
    const auto list = qc::read_tile_list(list_path);
    if (list.tiles.empty()) {
      spdlog::warn("embed {}: no tiles passed QC, no bag written", r.slide_id);
      continue;
    }
    const auto source = qc::open_slide(resolve_image(manifest_path, r));
    embed::EmbeddingBag bag;
    bag.slide_id = r.slide_id;
    bag.encoder_id = encoder;
    bag.dim = static_cast<std::uint32_t>(o.dim);
    bag.tile_size = static_cast<std::uint32_t>(list.tile_size);
    bag.level_downsample = static_cast<std::uint32_t>(list.level_downsample);
    bag.coords = list.tiles;
    bag.values.resize(list.tiles.size() * static_cast<std::size_t>(o.dim));
    qc::for_each_tile(*source, list.grid(), c.workers,
                      [&](std::size_t i, const qc::TileCoord&, const qc::RgbImage& tile, int) {
                        const auto v = embed::pseudo_encode(tile, c.seed, o.dim);
                        std::copy(v.begin(), v.end(), bag.values.begin() + static_cast<std::ptrdiff_t>(i * o.dim));
                      });
    embed::write_bag(embed::bag_path(out, r.slide_id), bag);
    spdlog::info("embed {}: {} x {}", r.slide_id, bag.size(), bag.dim);
  }
  write_run_json(out, "embed",
                 {{"manifest", manifest_path.string()},
                  {"tiles", tiles_dir.string()},
                  {"dim", o.dim},
                  {"encoder_id", encoder},
                  {"seed", c.seed},
                  {"workers", c.workers}});
}

namespace {

std::string stratification_csv(const std::vector<train::CategoryBalance>& report) {
  std::ostringstream csv;
  csv << "category,cohort_count,cohort_proportion";
  const std::size_t k = report.empty() ? 0 : report.front().test_proportion.size();
  for (std::size_t f = 0; f < k; ++f) csv << ",train_" << f << ",test_" << f;
  csv << '\n';
  for (const auto& b : report) {
    csv << b.category << ',' << b.cohort_count << ',' << num(b.cohort_proportion, 4);
    for (std::size_t f = 0; f < k; ++f) csv << ',' << num(b.train_proportion[f], 4) << ',' << num(b.test_proportion[f], 4);
    csv << '\n';
  }
  return csv.str();
}

}  // namespace

namespace detail {

std::vector<slide::SlideRecord> usable_records(const slide::CohortManifest& manifest, slide::Task task,
                                               const std::map<std::string, qc::QcSummary>& qc_summaries) {
  std::vector<slide::SlideRecord> out;
  for (const auto& r : manifest.records) {
    if (!slide::derive_label(r, task)) continue;
    if (auto it = qc_summaries.find(r.slide_id); it != qc_summaries.end() && it->second.excluded) continue;
    out.push_back(r);
  }
  return out;
}

LoadedRun load_run(const fs::path& dir) {
  const auto run = read_json_file(dir / "run.json");
  try {
    if (run.at("command").get<std::string>() != "train")
      throw DataError(dir.string() + " is not a training run; run `train` first");
    const auto& opt = run.at("options");
    LoadedRun r;
    r.dir = dir;
    r.work = opt.at("work").get<std::string>();
    r.manifest = opt.at("manifest").get<std::string>();
    r.bags = opt.at("bags").get<std::string>();
    r.task = slide::parse_task(opt.at("task").get<std::string>());
    r.config = mil::HeadConfig::from_json(opt.at("head_config"));
    r.seed = opt.at("seed").get<std::uint64_t>();
    r.folds = train::folds_from_json(read_json_file(dir / "splits.json"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + "/run.json: " + e.what() + "; re-run `train`");
  }
}

std::unique_ptr<mil::MilHead> load_fold_model(const LoadedRun& run, int fold) {
  auto model = mil::make_head(run.config, 0);
  nn::load_checkpoint(run.dir / fmt::format("fold{}.ckpt", fold), model->params());
  return model;
}

}  // namespace detail

using detail::LoadedRun;
using detail::load_fold_model;
using detail::load_run;
using detail::usable_records;

void run_split(const SplitOptions& o, const Common& c) {
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const auto task = slide::parse_task(o.task);
  slide::CohortManifest manifest = load_filtered_manifest(manifest_path, o.filters);
  manifest.records = usable_records(manifest, task, load_qc_summaries(o.work));
  std::vector<std::string> warnings;
  const auto folds = train::stratified_kfold(manifest, task, o.folds, c.seed, &warnings);
  for (const auto& w : warnings) spdlog::warn("split: {}", w);
  const fs::path out = or_default(o.out, o.work / "splits" / (std::string(slide::to_string(task)) + ".json"));
  write_json_file(out, train::folds_to_json(folds, task, c.seed));
  const auto report = train::stratification_report(train::summarize_patients(manifest, task), folds);
  fs::path csv = out;
  csv.replace_extension(".stratification.csv");
  write_text_file(csv, stratification_csv(report));
  write_run_json(out.parent_path(), "split",
                 {{"manifest", manifest_path.string()},
                  {"task", o.task},
                  {"folds", o.folds},
                  {"filters", paths_json(o.filters)},
                  {"out", out.string()},
                  {"seed", c.seed}});
  spdlog::info("split: {} folds written to {}", folds.size(), out.string());
}

fs::path run_train(const TrainOptions& o, const Common& c) {
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const fs::path bags_dir = or_default(o.bags, o.work / "bags");
  const auto task = slide::parse_task(o.task);
  const auto head = mil::parse_head(o.head);
  const auto manifest = load_filtered_manifest(manifest_path, o.filters);
  const auto records = usable_records(manifest, task, load_qc_summaries(o.work));
  if (records.empty()) throw DataError("no slides with labels for task " + o.task);
  const auto bags = load_bags(bags_dir, records);

  auto config = mil::HeadConfig::defaults(head, static_cast<int>(bags.front().dim));
  if (o.epochs >= 0) config.epochs = o.epochs;
  if (o.lr > 0) config.optim.lr = o.lr;
  if (o.weight_decay >= 0) config.optim.weight_decay = o.weight_decay;
  if (o.model_dim > 0) config.model_dim = o.model_dim;
  if (o.region_factor > 0) config.region_factor = o.region_factor;
  if (o.dropout >= 0) config.dropout = o.dropout;

  std::vector<train::FoldSplit> folds;
  if (!o.splits.empty()) {
    folds = train::folds_from_json(read_json_file(o.splits));
  } else {
    slide::CohortManifest usable;
    usable.records = records;
    std::vector<std::string> warnings;
    folds = train::stratified_kfold(usable, task, o.folds, c.seed, &warnings);
    for (const auto& w : warnings) spdlog::warn("train: {}", w);
  }

  std::vector<train::LabeledBag> data;
  for (std::size_t i = 0; i < records.size(); ++i)
    data.push_back({mil::prepare_bag(bags[i], config), records[i].patient_id, slide::derive_label(records[i], task)->label});

  std::string name = std::string(slide::to_string(task)) + "_" + mil::to_string(head);
  if (!o.filters.empty()) name += "_" + filter_tag(o.filters);
  const fs::path out = or_default(o.out, o.work / "models" / name);
  fs::create_directories(out);
  spdlog::info("train {}: {} slides, {} folds, {} epochs", name, data.size(), folds.size(), config.epochs);

  const auto cv = train::cross_validate(data, folds, config, c.seed, c.workers);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    nn::save_checkpoint(out / fmt::format("fold{}.ckpt", f), cv.models[f]->params());
    write_json_file(out / fmt::format("fold{}.json", f), {{"head_type", mil::to_string(head)},
                                                          {"D", config.input_dim},
                                                          {"task", slide::to_string(task)},
                                                          {"fold", f},
                                                          {"seed", c.seed},
                                                          {"hyperparameters", config.to_json()}});
  }
  write_json_file(out / "splits.json", train::folds_to_json(folds, task, c.seed));

  std::ostringstream pred;
  pred << "slide_id,patient_id,fold,label,logit,probability\n";
  for (const auto& p : cv.predictions)
    pred << p.slide_id << ',' << p.patient_id << ',' << p.fold << ',' << p.label << ',' << num(p.logit) << ','
         << num(p.probability) << '\n';
  write_text_file(out / "predictions.csv", pred.str());

  const auto confusion = train::misclassification_report(cv.predictions);
  std::ostringstream conf;
  conf << "slide_id,label,probability,outcome\n";
  auto emit = [&](const std::vector<train::ConfusionEntry>& v, const char* outcome) {
    for (const auto& e : v) conf << e.slide_id << ',' << e.label << ',' << num(e.probability) << ',' << outcome << '\n';
  };
  emit(confusion.tp, "TP");
  emit(confusion.tn, "TN");
  emit(confusion.fp, "FP");
  emit(confusion.fn, "FN");
  write_text_file(out / "confusion.csv", conf.str());

  auto result = cv.to_json();
  result["task"] = slide::to_string(task);
  result["head"] = mil::to_string(head);
  result["filters"] = o.filters;
  result["n_slides"] = data.size();
  result["table"] = fmt::format("{:.3f}±{:.3f}", cv.mean, cv.se);
  result["confusion"] = {{"threshold", confusion.threshold},
                         {"TP", confusion.tp.size()},
                         {"TN", confusion.tn.size()},
                         {"FP", confusion.fp.size()},
                         {"FN", confusion.fn.size()}};
  nlohmann::json errors = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(10, confusion.confident_errors.size()); ++i)
    errors.push_back({{"slide_id", confusion.confident_errors[i].slide_id},
                      {"label", confusion.confident_errors[i].label},
                      {"probability", confusion.confident_errors[i].probability}});
  result["confident_errors"] = errors;
  write_json_file(out / "cv_result.json", result);

  write_run_json(out, "train",
                 {{"work", fs::absolute(o.work).lexically_normal().string()},
                  {"manifest", fs::absolute(manifest_path).lexically_normal().string()},
                  {"bags", fs::absolute(bags_dir).lexically_normal().string()},
                  {"task", o.task},
                  {"head", o.head},
                  {"folds", folds.size()},
                  {"splits", o.splits.string()},
                  {"filters", o.filters},
                  {"head_config", config.to_json()},
                  {"seed", c.seed},
                  {"workers", c.workers}});
  spdlog::info("train {}: AUROC {:.3f} ± {:.3f}", name, cv.mean, cv.se);
  return out;
}

namespace {

struct EvalResult {
  std::vector<std::optional<double>> fold_auroc;
  std::size_t n_slides = 0;
};

EvalResult evaluate_run(const LoadedRun& run, const std::vector<std::string>& filters) {
  const auto manifest = load_filtered_manifest(run.manifest, filters);
  const auto records = usable_records(manifest, run.task, load_qc_summaries(run.work));
  EvalResult res;
  for (std::size_t f = 0; f < run.folds.size(); ++f) {
    const std::set<std::string> test(run.folds[f].test_patients.begin(), run.folds[f].test_patients.end());
    std::vector<slide::SlideRecord> subset;
    for (const auto& r : records)
      if (test.count(r.patient_id)) subset.push_back(r);
    if (subset.empty()) {
      res.fold_auroc.emplace_back();
      continue;
    }
    const auto model = load_fold_model(run, static_cast<int>(f));
    const auto bags = load_bags(run.bags, subset);
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      scores.push_back(model->infer(mil::prepare_bag(bags[i], run.config).instances).bag_logit);
      labels.push_back(slide::derive_label(subset[i], run.task)->label);
    }
    res.n_slides += subset.size();
    try {
      res.fold_auroc.emplace_back(train::auroc(scores, labels));
    } catch (const DataError&) {
      spdlog::warn("eval: fold {} has a single class after filtering; AUROC undefined", f);
      res.fold_auroc.emplace_back();
    }
  }
  return res;
}

nlohmann::json eval_json(const EvalResult& r) {
  nlohmann::json folds = nlohmann::json::array();
  std::vector<double> valid;
  for (const auto& a : r.fold_auroc) {
    folds.push_back(a ? nlohmann::json(*a) : nlohmann::json());
    if (a) valid.push_back(*a);
  }
  nlohmann::json j{{"fold_auroc", folds}, {"n_slides", r.n_slides}, {"valid_folds", valid.size()}};
  if (!valid.empty()) {
    const auto [mean, se] = train::mean_and_se(valid);
    j["mean_auroc"] = mean;
    j["se_auroc"] = se;
    j["table"] = fmt::format("{:.3f}±{:.3f}", mean, se);
  }
  return j;
}

}  // namespace

nlohmann::json run_eval(const EvalOptions& o, const Common& c) {
  if (o.run.empty()) throw DataError("--run is required");
  const auto run = load_run(o.run);
  const auto a = evaluate_run(run, o.filters);
  nlohmann::json out = eval_json(a);
  out["run"] = o.run.filename().string();
  out["filters"] = o.filters;
  if (!o.compare.empty()) {
    const auto other = load_run(o.compare);
    if (!o.unpaired && train::folds_to_json(other.folds, other.task, 0) != train::folds_to_json(run.folds, run.task, 0))
      throw DataError("runs use different fold splits; a paired test needs identical splits (or pass --unpaired)");
    const auto b = evaluate_run(other, o.filters);
    std::vector<double> va, vb;
    for (std::size_t f = 0; f < a.fold_auroc.size() && f < b.fold_auroc.size(); ++f)
      if (a.fold_auroc[f] && b.fold_auroc[f]) {
        va.push_back(*a.fold_auroc[f]);
        vb.push_back(*b.fold_auroc[f]);
      }
    const auto t = o.unpaired ? train::welch_t_test(va, vb) : train::paired_t_test(va, vb);
    out["compare"] = {{"run", o.compare.filename().string()},
                      {"result", eval_json(b)},
                      {"test", o.unpaired ? "welch" : "paired"},
                      {"t", std::isfinite(t.t) ? nlohmann::json(t.t) : nlohmann::json(t.t > 0 ? "inf" : "-inf")},
                      {"dof", t.dof},
                      {"p", t.p}};
  }
  std::string name = "eval";
  if (!o.filters.empty()) name += "_" + filter_tag(o.filters);
  if (!o.compare.empty()) name += "_vs_" + o.compare.filename().string();
  const fs::path path = or_default(o.out, o.run / (name + ".json"));
  write_json_file(path, out);
  spdlog::info("eval: wrote {}", path.string());
  (void)c;
  return out;
}

}  // namespace wsimil::cli
