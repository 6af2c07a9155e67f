#include <cstdlib>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "wsimil/cli/commands.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/common/parallel.hpp"

namespace {

using namespace wsimil;
using namespace wsimil::cli;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

std::map<const CLI::App*, std::string> g_config_files;

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("--config", g_config_files[sub], "key = value file with option defaults")
      ->check(CLI::ExistingFile);
  sub->fallthrough();
  return sub;
}

// CLI11 only reads config files attached to the root app, so subcommand files are applied here.
// Values already given on the command line or through the environment take precedence.
void apply_config_file(CLI::App& app, CLI::App& sub, const std::string& path) {
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub.get_name()))
      throw CLI::ConfigError::Extras(item.fullname());
    if (item.name == "config") continue;
    CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
    if (opt == nullptr) opt = app.get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw CLI::ConfigError::Extras(item.fullname());
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

void add_filters(CLI::App* sub, std::vector<std::string>& filters) {
  sub->add_option("--filter", filters, "restrict slides, e.g. diagnosis=UC or location=ileum (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised slide-level classification of IBD biopsies"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common common;
  common.workers = wsimil::default_workers();
  bool verbose = false;
  app.add_option("--seed", common.seed, "master seed")->envname("WMK_SEED")->capture_default_str();
  app.add_option("--workers", common.workers, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("-q,--quiet", common.quiet, "warnings and errors only");
  app.add_flag("-v,--verbose", verbose, "debug logging");

  QcOptions qc;
  auto* qc_cmd = add_command(app, "qc", "tissue mask, patch QC and tile lists");
  qc_cmd->add_option("--work", qc.work, "working directory")->capture_default_str();
  qc_cmd->add_option("--manifest", qc.manifest, "manifest CSV (default: <work>/manifest.csv)");
  qc_cmd->add_option("--tile-size", qc.tile_size)->check(CLI::PositiveNumber)->capture_default_str();
  qc_cmd->add_option("--thumbnail-downsample", qc.thumbnail_downsample, "0 picks one automatically")
      ->check(CLI::NonNegativeNumber);
  qc_cmd->add_option("--closing-radius", qc.closing_radius)->check(CLI::NonNegativeNumber)->capture_default_str();
  qc_cmd->add_flag("--export-png", qc.export_png, "also write kept tiles as PNG");

  QcOptions tile;
  auto* tile_cmd = add_command(app, "tile", "tile lists at a pyramid downsample");
  tile_cmd->add_option("--work", tile.work)->capture_default_str();
  tile_cmd->add_option("--manifest", tile.manifest);
  tile_cmd->add_option("--tile-size", tile.tile_size)->check(CLI::PositiveNumber)->capture_default_str();
  tile_cmd->add_option("--downsample", tile.level_downsample)->check(CLI::PositiveNumber)->capture_default_str();
  tile_cmd->add_option("--thumbnail-downsample", tile.thumbnail_downsample)->check(CLI::NonNegativeNumber);
  tile_cmd->add_option("--closing-radius", tile.closing_radius)->check(CLI::NonNegativeNumber);
  tile_cmd->add_flag("--export-png", tile.export_png);

  EmbedOptions embed;
  auto* embed_cmd = add_command(app, "embed", "encode kept tiles into embedding bags");
  embed_cmd->add_option("--work", embed.work)->capture_default_str();
  embed_cmd->add_option("--manifest", embed.manifest);
  embed_cmd->add_option("--tiles", embed.tiles, "tile list directory (default: <work>/tiles)");
  embed_cmd->add_option("--out", embed.out, "bag directory (default: <work>/bags)");
  embed_cmd->add_option("--dim", embed.dim)->check(CLI::Range(8, 4096))->capture_default_str();

  SplitOptions split;
  auto* split_cmd = add_command(app, "split", "stratified patient-level k-fold assignment");
  split_cmd->add_option("--work", split.work)->capture_default_str();
  split_cmd->add_option("--manifest", split.manifest);
  split_cmd->add_option("--task", split.task, "diagnosis, macroscopic, severity_cd, severity_uc")->capture_default_str();
  split_cmd->add_option("-k,--folds", split.folds)->check(CLI::Range(2, 100))->capture_default_str();
  add_filters(split_cmd, split.filters);
  split_cmd->add_option("--out", split.out);

  TrainOptions train;
  auto* train_cmd = add_command(app, "train", "cross-validated training of a MIL head");
  train_cmd->add_option("--work", train.work)->capture_default_str();
  train_cmd->add_option("--manifest", train.manifest);
  train_cmd->add_option("--bags", train.bags);
  train_cmd->add_option("--task", train.task)->capture_default_str();
  train_cmd->add_option("--head", train.head, "dsmil or transformer (alias hipt)")->capture_default_str();
  train_cmd->add_option("-k,--folds", train.folds)->check(CLI::Range(2, 100))->capture_default_str();
  train_cmd->add_option("--splits", train.splits, "fold assignment from `split`");
  add_filters(train_cmd, train.filters);
  train_cmd->add_option("--out", train.out);
  train_cmd->add_option("--epochs", train.epochs)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--weight-decay", train.weight_decay)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--model-dim", train.model_dim)->check(CLI::PositiveNumber);
  train_cmd->add_option("--region-factor", train.region_factor)->check(CLI::PositiveNumber);
  train_cmd->add_option("--dropout", train.dropout)->check(CLI::Range(0.0, 0.95));

  EvalOptions eval;
  auto* eval_cmd = add_command(app, "eval", "re-score a run on a filtered subset, optionally against another run");
  eval_cmd->add_option("--run", eval.run, "run directory from `train`")->required();
  add_filters(eval_cmd, eval.filters);
  eval_cmd->add_option("--compare", eval.compare, "second run for a t-test over fold AUROCs");
  eval_cmd->add_flag("--unpaired", eval.unpaired, "Welch test instead of the paired test");
  eval_cmd->add_option("--out", eval.out);

  AttentionOptions att;
  auto* att_cmd = add_command(app, "attention", "attention overlays and localisation scores");
  att_cmd->add_option("--run", att.run)->required();
  att_cmd->add_option("--out", att.out);
  att_cmd->add_option("--threshold", att.threshold)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  att_cmd->add_option("--annotations", att.annotations, "directory of <slide>.json polygon files");
  att_cmd->add_option("--ground-truth", att.ground_truth);
  att_cmd->add_option("--png-scale", att.png_scale)->check(CLI::Range(1, 64))->capture_default_str();

  CellsOptions cells;
  auto* cells_cmd = add_command(app, "cells", "cell density heatmaps from cell predictions");
  cells_cmd->add_option("--work", cells.work)->capture_default_str();
  cells_cmd->add_option("--manifest", cells.manifest);
  cells_cmd->add_option("--cells", cells.cells, "cells CSV (default: <work>/cells.csv)");
  cells_cmd->add_option("--out", cells.out);
  cells_cmd->add_option("--class", cells.classes, "cell classes (repeatable; default: all)");
  cells_cmd->add_option("--tile-size", cells.tile_size)->check(CLI::PositiveNumber)->capture_default_str();

  HifOptions hif;
  auto* hif_cmd = add_command(app, "hif", "human-interpretable features and group tests");
  hif_cmd->add_option("--work", hif.work)->capture_default_str();
  hif_cmd->add_option("--manifest", hif.manifest);
  hif_cmd->add_option("--cells", hif.cells);
  hif_cmd->add_option("--out", hif.out);
  hif_cmd->add_option("--level", hif.level, "patient or slide")->capture_default_str();

  SynthOptions synth;
  std::string preset = "default";
  std::string mode;
  int patients = -1, slides = -1, grid = -1, mislabeled = -1, dim = -1;
  double lesion = -1, artefact = -1, signal = -1;
  bool shuffle = false, no_cells = false;
  auto* synth_cmd = add_command(app, "synth", "generate a synthetic cohort with planted ground truth");
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--preset", preset, "default, small, pixels, hif-null")->capture_default_str();
  synth_cmd->add_option("--mode", mode, "bags or pixels");
  synth_cmd->add_option("--patients", patients)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--slides", slides)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--grid", grid, "patch grid side")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--lesion-fraction", lesion)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--artefact-fraction", artefact)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--signal", signal)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--dim", dim)->check(CLI::Range(1, 4096));
  synth_cmd->add_option("--mislabeled", mislabeled)->check(CLI::NonNegativeNumber);
  synth_cmd->add_flag("--shuffle-labels", shuffle, "permute patient labels (null control)");
  synth_cmd->add_flag("--no-cells", no_cells);

  ReportOptions report;
  auto* report_cmd = add_command(app, "report", "HTML report of a working directory");
  report_cmd->add_option("--work", report.work)->capture_default_str();
  report_cmd->add_option("--out", report.out);

  PipelineOptions pipe;
  auto* pipe_cmd = add_command(app, "pipeline", "end to end: synth or manifest, QC, embed, train, eval, report");
  pipe_cmd->add_option("--out", pipe.out)->required();
  pipe_cmd->add_option("--synth", pipe.synth_preset, "synthetic preset to generate");
  pipe_cmd->add_option("--manifest", pipe.manifest);
  pipe_cmd->add_option("--cells", pipe.cells);
  pipe_cmd->add_option("--task", pipe.task)->capture_default_str();
  pipe_cmd->add_option("--head", pipe.heads, "heads to train (repeatable)");
  pipe_cmd->add_option("-k,--folds", pipe.folds)->check(CLI::Range(2, 100))->capture_default_str();
  pipe_cmd->add_option("--dsmil-epochs", pipe.dsmil_epochs)->check(CLI::NonNegativeNumber);
  pipe_cmd->add_option("--transformer-epochs", pipe.transformer_epochs)->check(CLI::NonNegativeNumber);
  pipe_cmd->add_option("--region-factor", pipe.region_factor)->check(CLI::PositiveNumber);
  pipe_cmd->add_option("--dim", pipe.dim)->check(CLI::Range(8, 4096))->capture_default_str();

  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands())
      if (!g_config_files[sub].empty()) apply_config_file(app, *sub, g_config_files[sub]);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto logger = spdlog::stderr_color_mt("wsimil");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(common.quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (qc_cmd->parsed()) run_qc(qc, common);
    else if (tile_cmd->parsed()) run_tile(tile, common);
    else if (embed_cmd->parsed()) run_embed(embed, common);
    else if (split_cmd->parsed()) run_split(split, common);
    else if (train_cmd->parsed()) run_train(train, common);
    else if (eval_cmd->parsed()) std::cout << run_eval(eval, common).dump(2) << '\n';
    else if (att_cmd->parsed()) run_attention(att, common);
    else if (cells_cmd->parsed()) run_cells(cells, common);
    else if (hif_cmd->parsed()) run_hif(hif, common);
    else if (synth_cmd->parsed()) {
      synth.config = synth::SynthConfig::preset(preset);
      if (!mode.empty()) {
        if (mode == "bags") synth.config.mode = synth::SynthMode::Bags;
        else if (mode == "pixels") synth.config.mode = synth::SynthMode::Pixels;
        else throw DataError("--mode must be bags or pixels");
      }
      if (patients > 0) synth.config.n_patients = patients;
      if (slides > 0) synth.config.n_slides = slides;
      if (grid > 0) synth.config.grid_cols = synth.config.grid_rows = grid;
      if (lesion >= 0) synth.config.lesion_fraction = {lesion, lesion};
      if (artefact >= 0) synth.config.artefact_fraction = {artefact, artefact};
      if (signal >= 0) synth.config.signal_strength = signal;
      if (dim > 0) synth.config.dim = dim;
      if (mislabeled >= 0) synth.config.mislabeled_slides = mislabeled;
      if (shuffle) synth.config.shuffle_labels = true;
      if (no_cells) synth.config.emit_cells = false;
      run_synth(synth, common);
    } else if (report_cmd->parsed()) run_report(report, common);
    else if (pipe_cmd->parsed()) run_pipeline(pipe, common);
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const ShapeError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternal;
  }
  return kOk;
}
