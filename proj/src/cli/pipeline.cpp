#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "wsimil/cli/commands.hpp"
#include "wsimil/cli/workspace.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/mil/heads.hpp"
#include "wsimil/synth/cohort_gen.hpp"

namespace wsimil::cli {

void run_synth(const SynthOptions& o, const Common& c) {
  if (o.out.empty()) throw DataError("--out is required");
  synth::SynthConfig config = o.config;
  config.seed = c.seed;
  config.validate();
  const auto cohort = synth::generate_cohort(config, c.workers);
  synth::write_cohort(cohort, o.out);
  write_run_json(o.out, "synth", {{"config", config.to_json()}, {"workers", c.workers}});
  spdlog::info("synth: {} slides of {} patients in {}", cohort.manifest.records.size(),
               cohort.manifest.patients().size(), o.out.string());
}

void run_pipeline(const PipelineOptions& o, const Common& c) {
  if (o.out.empty()) throw DataError("--out is required");
  if (o.heads.empty()) throw DataError("at least one head is required");
  fs::create_directories(o.out);
  const fs::path work = o.out;

  bool need_embedding = true;
  if (!o.synth_preset.empty()) {
    SynthOptions s;
    s.out = work;
    s.config = synth::SynthConfig::preset(o.synth_preset);
    s.config.dim = o.dim;
    run_synth(s, c);
    need_embedding = s.config.mode == synth::SynthMode::Pixels;
  } else {
    if (o.manifest.empty()) throw DataError("either --synth or --manifest is required");
    // Image paths stay relative to the original manifest's directory.
    const auto manifest = slide::load_manifest(o.manifest);
    slide::CohortManifest copy = manifest;
    for (auto& r : copy.records) r.image_path = resolve_image(o.manifest, r).string();
    slide::save_manifest(work / "manifest.csv", copy);
    if (!o.cells.empty()) fs::copy_file(o.cells, work / "cells.csv", fs::copy_options::overwrite_existing);
  }

  if (need_embedding) {
    QcOptions q;
    q.work = work;
    run_qc(q, c);
    EmbedOptions e;
    e.work = work;
    e.dim = o.dim;
    run_embed(e, c);
  }

  SplitOptions split;
  split.work = work;
  split.task = o.task;
  split.folds = o.folds;
  run_split(split, c);
  const fs::path splits = work / "splits" / (std::string(slide::to_string(slide::parse_task(o.task))) + ".json");

  nlohmann::json summary{{"task", o.task}, {"folds", o.folds}, {"seed", c.seed}, {"heads", nlohmann::json::object()}};
  std::vector<fs::path> runs;
  for (const auto& head : o.heads) {
    TrainOptions t;
    t.work = work;
    t.task = o.task;
    t.head = head;
    t.folds = o.folds;
    t.splits = splits;
    const auto type = mil::parse_head(head);
    const int epochs = type == mil::HeadType::Dsmil ? o.dsmil_epochs : o.transformer_epochs;
    t.epochs = epochs;
    if (type == mil::HeadType::Transformer) t.region_factor = o.region_factor;
    const fs::path dir = run_train(t, c);
    runs.push_back(dir);
    const auto cv = read_json_file(dir / "cv_result.json");
    summary["heads"][head] = {{"run", fs::relative(dir, work).generic_string()},
                              {"fold_auroc", cv.at("fold_auroc")},
                              {"mean_auroc", cv.at("mean_auroc")},
                              {"se_auroc", cv.at("se_auroc")},
                              {"table", cv.at("table")}};
    AttentionOptions a;
    a.run = dir;
    run_attention(a, c);
    const auto att = read_json_file(work / "attention" / dir.filename() / "summary.json");
    summary["heads"][head]["attention"] = att;
  }

  if (runs.size() >= 2) {
    EvalOptions ev;
    ev.run = runs[0];
    ev.compare = runs[1];
    const auto cmp = run_eval(ev, c);
    summary["comparison"] = {{"a", o.heads[0]},
                             {"b", o.heads[1]},
                             {"t", cmp["compare"]["t"]},
                             {"dof", cmp["compare"]["dof"]},
                             {"p", cmp["compare"]["p"]}};
  }

  if (fs::exists(work / "cells.csv")) {
    CellsOptions cells;
    cells.work = work;
    run_cells(cells, c);
    HifOptions hif;
    hif.work = work;
    run_hif(hif, c);
  }

  ReportOptions report;
  report.work = work;
  run_report(report, c);

  write_json_file(work / "cv_result.json", summary);
  write_run_json(work, "pipeline",
                 {{"synth", o.synth_preset},
                  {"manifest", o.manifest.string()},
                  {"task", o.task},
                  {"heads", o.heads},
                  {"folds", o.folds},
                  {"dsmil_epochs", o.dsmil_epochs},
                  {"transformer_epochs", o.transformer_epochs},
                  {"region_factor", o.region_factor},
                  {"dim", o.dim},
                  {"seed", c.seed},
                  {"workers", c.workers}});
  spdlog::info("pipeline: done, summary in {}", (work / "cv_result.json").string());
}

}  // namespace wsimil::cli
