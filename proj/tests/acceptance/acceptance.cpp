#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "oracles.hpp"
#include "wsimil/common/csv.hpp"
#include "wsimil/common/parallel.hpp"
#include "wsimil/heatmap/attention_map.hpp"
#include "wsimil/heatmap/cells.hpp"
#include "wsimil/mil/heads.hpp"
#include "wsimil/nn/grad_check.hpp"
#include "wsimil/qc/extract.hpp"
#include "wsimil/qc/patch_qc.hpp"
#include "wsimil/qc/tiling.hpp"
#include "wsimil/qc/tissue.hpp"
#include "wsimil/synth/cohort_gen.hpp"
#include "wsimil/synth/procedural_slide.hpp"
#include "wsimil/train/folds.hpp"
#include "wsimil/train/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wsimil;

namespace {

// Pinned thresholds.
constexpr double kLearnAuroc = 0.95;
constexpr double kRuntimeLimitS = 600.0;
constexpr double kNullLow = 0.43;
constexpr double kNullHigh = 0.57;
constexpr double kAttentionAuroc = 0.90;
constexpr double kDiceThreshold = 0.5;
constexpr double kDiceShare = 0.80;
constexpr double kGradTolerance = 1e-4;
constexpr double kRejectTolerance = 0.03;
constexpr double kQcDice = 0.80;
constexpr double kMemoryLimitKb = 2.0 * 1024 * 1024;
constexpr double kStrataTolerance = 0.05;
constexpr double kHifAlpha = 0.01;
constexpr double kKsAlpha = 0.01;
constexpr int kNullRepeats = 200;
constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int id, const std::string& name, const Outcome& o) {
  const std::string line = fmt::format("[{}] {:>2} {}: {}", o.pass ? "PASS" : "FAIL", id, name, o.detail);
  std::cout << line << std::endl;
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs the command-line tool; output goes to `log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + WSIMIL_CLI + "' " + args + " > " + quote(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return json::parse(in);
}

std::vector<std::map<std::string, std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  std::string line;
  std::getline(in, line);
  const auto header = wsimil::split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = wsimil::split_csv_line(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double hif_p(const fs::path& tests_csv, const std::string& feature) {
  for (const auto& row : read_csv_rows(tests_csv))
    if (row.at("feature") == feature) return std::stod(row.at("p"));
  throw std::runtime_error(feature + " not in " + tests_csv.string());
}

/// One-sample Kolmogorov-Smirnov test against U(0, 1), asymptotic p-value
/// with the small-sample correction of Stephens.
double ks_uniform_p(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1) / n - x[i]);
    d = std::max(d, x[i] - static_cast<double>(i) / n);
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0;
  for (int k = 1; k <= 100; ++k) q += 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

// 8: streaming a 100k x 100k procedural slide, measured in a child process so
// the peak resident set covers this criterion alone.
Outcome streaming_scale() {
  constexpr std::int64_t side = 100000;
  constexpr int cell = 4096;
  constexpr int tile = 224;
  constexpr int thumb_ds = 64;
  struct Rect {
    int c0, r0, c1, r1;
  };
  const std::vector<Rect> rects{{2, 3, 4, 5}, {10, 10, 11, 12}, {24, 0, 25, 2}};

  int fds[2];
  if (pipe(fds) != 0) return {false, "pipe failed"};
  const pid_t pid = fork();
  if (pid < 0) return {false, "fork failed"};
  if (pid == 0) {
    close(fds[0]);
    std::string msg;
    try {
      auto layout = synth::SlideLayout::blank("huge", side, side, cell, kSeed);
      for (const auto& r : rects) layout.fill_tissue_rect(r.c0, r.r0, r.c1, r.r1);
      synth::ProceduralSlide slide(layout);
      qc::TissueParams tp;
      tp.downsample = thumb_ds;
      const auto mask = qc::detect_tissue(slide.thumbnail(thumb_ds), tp);
      const auto grid = qc::plan_tiles(side, side, tile, mask);

      std::set<qc::TileCoord> analytic;
      const std::int64_t n = side / tile;
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < n; ++c)
          for (const auto& q : rects) {
            const std::int64_t x0 = std::int64_t{q.c0} * cell, x1 = std::min(side, std::int64_t{q.c1} * cell);
            const std::int64_t y0 = std::int64_t{q.r0} * cell, y1 = std::min(side, std::int64_t{q.r1} * cell);
            if (c * tile < x1 && (c + 1) * tile > x0 && r * tile < y1 && (r + 1) * tile > y0) {
              analytic.insert({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)});
              break;
            }
          }
      const std::set<qc::TileCoord> planned(grid.tiles.begin(), grid.tiles.end());

      std::vector<std::size_t> streamed(static_cast<std::size_t>(default_workers()), 0);
      qc::for_each_tile(slide, grid, default_workers(), [&](std::size_t, const qc::TileCoord&, const qc::RgbImage& img,
                                                            int worker) {
        if (img.width == tile && img.height == tile) ++streamed[static_cast<std::size_t>(worker)];
      });
      std::size_t total = 0;
      for (auto s : streamed) total += s;
      msg = fmt::format("{} {} {} {}", grid.tiles.size(), analytic.size(), planned == analytic ? 1 : 0, total);
    } catch (const std::exception& e) {
      msg = std::string("error ") + e.what();
    }
    (void)!write(fds[1], msg.data(), msg.size());
    close(fds[1]);
    _exit(0);
  }
  close(fds[1]);
  std::string msg;
  char buf[256];
  ssize_t got;
  while ((got = read(fds[0], buf, sizeof buf)) > 0) msg.append(buf, static_cast<std::size_t>(got));
  close(fds[0]);
  int status = 0;
  rusage usage{};
  wait4(pid, &status, 0, &usage);
  if (msg.rfind("error", 0) == 0) return {false, msg};
  std::istringstream in(msg);
  std::size_t planned = 0, analytic = 0, same = 0, streamed = 0;
  in >> planned >> analytic >> same >> streamed;
  const double peak_kb = static_cast<double>(usage.ru_maxrss);
  const bool pass = planned == analytic && same == 1 && streamed == planned && peak_kb < kMemoryLimitKb;
  return {pass, fmt::format("100000x100000 slide, {} tiles planned, {} analytic, same set {}, {} streamed, "
                            "peak RSS {:.0f} MB (limit 2048 MB)",
                            planned, analytic, same ? "yes" : "no", streamed, peak_kb / 1024)};
}

// 5: finite-difference gradients.
Outcome gradient_integrity() {
  using testing_support::op_cases;
  double worst = 0;
  std::string worst_name;
  int checks = 0;
  for (const auto& op : op_cases())
    for (const auto& [r, c] : testing_support::grad_shapes())
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed * 31 + static_cast<std::uint64_t>(r * 7 + c));
        const auto rep = nn::grad_check(op.f, op.make(rng, r, c));
        ++checks;
        if (rep.max_rel_error > worst || !std::isfinite(rep.max_rel_error)) {
          worst = rep.max_rel_error;
          worst_name = fmt::format("{} {}x{} seed {}", op.name, r, c, seed);
        }
      }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(5 * 4);
    for (double& x : v) x = g(rng);
    const auto x = nn::Tensor::from(5, 4, std::move(v));
    for (auto type : {mil::HeadType::Dsmil, mil::HeadType::Transformer}) {
      auto cfg = testing_support::small_head_config(type, 4);
      if (type == mil::HeadType::Transformer) cfg.dropout = 0.2;
      auto head = mil::make_head(cfg, seed);
      std::vector<nn::Tensor> inputs;
      for (auto& p : head->params()) inputs.push_back(p.tensor);
      const auto rep = nn::grad_check(
          [&](const std::vector<nn::Tensor>&) {
            return nn::bce_with_logits(head->forward(x, true, seed).bag_logit, seed % 2 ? 1.0 : 0.0);
          },
          inputs);
      ++checks;
      if (rep.max_rel_error > worst || !std::isfinite(rep.max_rel_error)) {
        worst = rep.max_rel_error;
        worst_name = fmt::format("{} head seed {}", mil::to_string(type), seed);
      }
    }
  }
  return {worst < kGradTolerance,
          fmt::format("{} checks ({} ops x 3 shapes x 5 seeds + 2 heads x 5 seeds), max relative error {:.2e} at {} "
                      "(limit 1e-4)",
                      checks, op_cases().size(), worst, worst_name)};
}

// 6: exact agreement with independent oracles.
Outcome oracle_equivalence() {
  std::mt19937_64 rng(kSeed);
  int auroc_bad = 0, dice_bad = 0, qc_bad = 0, mw_bad = 0, mw_cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = trial % 2 ? static_cast<double>(rng() % 5) : std::uniform_real_distribution<double>()(rng);
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    auroc_bad += train::auroc(s, y) != testing_support::pairwise_auroc(s, y);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 12), r = 1 + static_cast<int>(rng() % 12);
    heatmap::GridMask a(c, r), b(c, r);
    int pa = 0, pb = 0, both = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      a.values[i] = static_cast<std::uint8_t>(rng() % 3 == 0);
      b.values[i] = static_cast<std::uint8_t>(rng() % 2);
      pa += a.values[i];
      pb += b.values[i];
      both += a.values[i] && b.values[i];
    }
    const double oracle = pa + pb == 0 ? 1.0 : 2.0 * both / (pa + pb);
    dice_bad += heatmap::dice(a, b) != oracle;

    qc::ClassMap x(c, r), z(c, r);
    for (auto& v : x.labels) v = static_cast<std::uint8_t>(rng() % 3);
    for (auto& v : z.labels) v = static_cast<std::uint8_t>(rng() % 3);
    const auto d = qc::qc_dice(x, z);
    double macro = 0;
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      int px = 0, pz = 0, pxz = 0;
      for (std::size_t i = 0; i < x.labels.size(); ++i) {
        px += x.labels[i] == k;
        pz += z.labels[i] == k;
        pxz += x.labels[i] == k && z.labels[i] == k;
      }
      const double o = px + pz == 0 ? 1.0 : 2.0 * pxz / (px + pz);
      ok = ok && d.per_class[k] == o;
      macro += o;
    }
    qc_bad += !(ok && d.macro == macro / 3);
  }
  for (int na = 1; na <= 8; ++na)
    for (int nb = 1; nb <= 8; ++nb)
      for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> a(na), b(nb);
        for (double& v : a) v = trial ? static_cast<double>(rng() % 4) : std::uniform_real_distribution<double>()(rng);
        for (double& v : b) v = trial ? static_cast<double>(rng() % 4) : std::uniform_real_distribution<double>()(rng);
        const auto mw = heatmap::hif_group_test(a, b);
        ++mw_cases;
        mw_bad += !mw.exact || mw.p != testing_support::enumeration_p(a, b);
      }
  const bool pass = auroc_bad + dice_bad + qc_bad + mw_bad == 0;
  return {pass, fmt::format("mismatches: auroc {}/100, dice {}/100, qc_dice {}/100, Mann-Whitney exact {}/{} "
                            "(group sizes 1..8, exact equality)",
                            auroc_bad, dice_bad, qc_bad, mw_bad, mw_cases)};
}

// 7: QC exclusion rule, rejected fraction and 3-class Dice.
Outcome qc_rules() {
  struct Batch {
    double lo, hi;
  };
  const std::vector<Batch> batches{{0.45, 0.45}, {0.55, 0.55}, {0.0, 0.4}};
  int slides = 0, rule_bad = 0;
  double worst_fraction = 0, dice_sum = 0, dice_min = 1;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    auto cfg = synth::SynthConfig::preset("pixels");
    cfg.n_patients = 4;
    cfg.n_slides = 8;
    cfg.artefact_fraction = {batches[b].lo, batches[b].hi};
    cfg.emit_cells = false;
    cfg.seed = kSeed + b;
    const auto cohort = synth::generate_cohort(cfg, default_workers());
    for (std::size_t i = 0; i < cohort.layouts.size(); ++i) {
      const auto& layout = cohort.layouts[i];
      const double planted = cohort.truth.slides[i].planted_artefact_fraction;
      synth::ProceduralSlide slide(layout);
      qc::ExtractionParams params;
      params.tile_size = cfg.tile_size;
      params.qc.keep_class_map = true;
      params.workers = default_workers();
      const auto run = qc::run_slide_qc(slide, layout.slide_id, params);
      ++slides;
      if (batches[b].lo == batches[b].hi) rule_bad += run.summary.excluded != (planted > qc::kSlideRejectionLimit);
      worst_fraction = std::max(worst_fraction, std::abs(run.summary.tissue_fraction_rejected - planted));

      const int t = cfg.tile_size;
      const int n = static_cast<int>(run.grid.tiles.size());
      qc::ClassMap pred(t, t * n), ref(t, t * n);
      for (int k = 0; k < n; ++k) {
        const auto& coord = run.grid.tiles[static_cast<std::size_t>(k)];
        const auto& map = *run.patches[static_cast<std::size_t>(k)].class_map;
        const auto truth =
            synth::ground_truth_classes(layout, run.grid.origin_x(coord), run.grid.origin_y(coord), t, t);
        std::copy(map.labels.begin(), map.labels.end(), pred.labels.begin() + std::ptrdiff_t{k} * t * t);
        std::copy(truth.labels.begin(), truth.labels.end(), ref.labels.begin() + std::ptrdiff_t{k} * t * t);
      }
      const double macro = qc::qc_dice(pred, ref).macro;
      dice_sum += macro;
      dice_min = std::min(dice_min, macro);
    }
  }
  const double dice_mean = dice_sum / slides;
  const bool pass = rule_bad == 0 && worst_fraction <= kRejectTolerance && dice_mean >= kQcDice;
  return {pass, fmt::format("{} slides; 0.45/0.55 exclusion errors {}; max |rejected - planted| {:.1f} pp (limit 3); "
                            "macro Dice mean {:.4f}, min {:.4f} (need mean >= 0.80)",
                            slides, rule_bad, worst_fraction * 100, dice_mean, dice_min)};
}

// 9: stratified patient-level folds on a 638-patient cohort.
Outcome stratification() {
  constexpr int k = 5;
  const auto manifest = synth::stratification_cohort(638, kSeed);
  const auto folds = train::stratified_kfold(manifest, slide::Task::Macroscopic, k, kSeed);
  const auto patients = train::summarize_patients(manifest, slide::Task::Macroscopic);
  std::map<std::string, int> tested;
  for (const auto& f : folds)
    for (const auto& p : f.test_patients) ++tested[p];
  int once_bad = 0;
  for (const auto& p : patients) once_bad += tested[p.patient_id] != 1;
  once_bad += static_cast<int>(tested.size() != patients.size());
  double worst = 0;
  std::string worst_cat;
  int categories = 0;
  for (const auto& cat : train::stratification_report(patients, folds)) {
    if (cat.cohort_count < k) continue;
    ++categories;
    for (std::size_t f = 0; f < cat.test_proportion.size(); ++f)
      for (double v : {cat.test_proportion[f], cat.train_proportion[f]})
        if (std::abs(v - cat.cohort_proportion) > worst) {
          worst = std::abs(v - cat.cohort_proportion);
          worst_cat = cat.category;
        }
  }
  return {once_bad == 0 && worst <= kStrataTolerance,
          fmt::format("{} patients, {} folds, {} not tested exactly once; {} categories, max deviation {:.1f} pp at {} "
                      "(limit 5)",
                      patients.size(), k, once_bad, categories, worst * 100, worst_cat)};
}

struct PipelineRun {
  fs::path dir;
  double seconds = 0;
  int code = -1;
};

PipelineRun run_pipeline(const fs::path& dir, const fs::path& log) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineRun r;
  r.dir = dir;
  r.code = cli(fmt::format("--seed {} pipeline --out {} --synth default", kSeed, quote(dir)), log);
  r.seconds = seconds_since(t0);
  return r;
}

const char* kHeads[] = {"dsmil", "transformer"};

// 1
Outcome planted_learning(const PipelineRun& run) {
  if (run.code != 0) return {false, fmt::format("pipeline exited with {}", run.code)};
  const auto cv = read_json(run.dir / "cv_result.json");
  bool pass = run.seconds < kRuntimeLimitS;
  std::string parts;
  for (const char* h : kHeads) {
    const double m = cv.at("heads").at(h).at("mean_auroc").get<double>();
    pass = pass && m >= kLearnAuroc;
    parts += fmt::format("{} {:.3f}, ", h, m);
  }
  return {pass, fmt::format("5-fold mean AUROC {}pipeline {:.0f} s on {} worker(s) (need >= 0.95, < 600 s)", parts,
                            run.seconds, default_workers())};
}

// 3
Outcome attention_localization(const PipelineRun& run) {
  if (run.code != 0) return {false, "pipeline failed"};
  const auto cv = read_json(run.dir / "cv_result.json");
  bool pass = true;
  std::string parts;
  for (const char* h : kHeads) {
    const auto& a = cv.at("heads").at(h).at("attention");
    const double m = a.at("mean_attention_auroc").get<double>();
    pass = pass && m >= kAttentionAuroc;
    parts += fmt::format("{} {:.3f} over {} positive slides; ", h, m, a.at("truth_slides").get<int>());
  }
  return {pass, parts + "need >= 0.90"};
}

// 4
Outcome attention_dice(const PipelineRun& run) {
  if (run.code != 0) return {false, "pipeline failed"};
  bool pass = true;
  std::string parts;
  for (const char* h : kHeads) {
    const auto rows = read_csv_rows(run.dir / "attention" / (std::string("macroscopic_") + h) / "summary.csv");
    int positive = 0, good = 0;
    for (const auto& row : rows) {
      const auto& d = row.at("dice_truth");
      if (d.empty()) continue;
      ++positive;
      good += std::stod(d) >= kDiceThreshold;
    }
    const double share = positive ? static_cast<double>(good) / positive : 0.0;
    pass = pass && positive > 0 && share >= kDiceShare;
    parts += fmt::format("{} {}/{} ({:.0f}%); ", h, good, positive, share * 100);
  }
  return {pass, "slides with Dice >= 0.5 at threshold 0.5: " + parts + "need >= 80%"};
}

// 2
Outcome null_control(const fs::path& root) {
  const fs::path dir = root / "null";
  if (cli(fmt::format("--seed {} synth --preset default --shuffle-labels --out {}", kSeed, quote(dir)),
          root / "null_synth.log") != 0)
    return {false, "synth failed"};
  bool pass = true;
  std::string parts;
  for (const char* h : kHeads) {
    if (cli(fmt::format("--seed {} train --work {} --head {}", kSeed, quote(dir), h),
            root / (std::string("null_train_") + h + ".log")) != 0)
      return {false, std::string("train failed for ") + h};
    const double m =
        read_json(dir / "models" / (std::string("macroscopic_") + h) / "cv_result.json").at("mean_auroc").get<double>();
    pass = pass && m >= kNullLow && m <= kNullHigh;
    parts += fmt::format("{} {:.3f}, ", h, m);
  }
  return {pass, "shuffled patient labels, 5-fold mean AUROC " + parts + "need within [0.43, 0.57]"};
}

// 10
Outcome hif_pipeline(const PipelineRun& run, const fs::path& root) {
  if (run.code != 0) return {false, "pipeline failed"};
  const std::string feature = "all/neutrophil_ratio";
  const double planted = hif_p(run.dir / "hif" / "hif_tests.csv", feature);
  std::vector<double> null_p;
  const fs::path dir = root / "hif_null";
  for (int i = 0; i < kNullRepeats; ++i) {
    fs::remove_all(dir);
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    if (cli(fmt::format("--seed {} synth --preset hif-null --out {}", seed, quote(dir)), root / "hif_null.log") != 0 ||
        cli(fmt::format("hif --work {}", quote(dir)), root / "hif_null.log") != 0)
      return {false, fmt::format("null repeat {} failed", i)};
    null_p.push_back(hif_p(dir / "hif" / "hif_tests.csv", feature));
  }
  const double ks = ks_uniform_p(null_p);
  const auto below = std::count_if(null_p.begin(), null_p.end(), [](double p) { return p < 0.05; });
  return {planted < kHifAlpha && ks > kKsAlpha,
          fmt::format("{} planted p = {:.3g} (need < 0.01); null KS p = {:.3f} over {} cohorts, {} with p < 0.05 "
                      "(need KS p > 0.01)",
                      feature, planted, ks, null_p.size(), below)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

// 11
Outcome determinism(const PipelineRun& first, const fs::path& root) {
  if (first.code != 0) return {false, "first pipeline failed"};
  const fs::path kept = root / "pipeline_first";
  fs::remove_all(kept);
  fs::rename(first.dir, kept);
  const auto second = run_pipeline(first.dir, root / "pipeline_second.log");
  if (second.code != 0) return {false, "second pipeline failed"};
  const auto a = snapshot(kept), b = snapshot(second.dir);
  int differing = 0, missing = 0, ckpt = 0, png = 0;
  std::string example;
  for (const auto& [name, bytes] : a) {
    ckpt += name.ends_with(".ckpt");
    png += name.ends_with(".png");
    const auto it = b.find(name);
    if (it == b.end()) {
      ++missing;
      if (example.empty()) example = name;
    } else if (it->second != bytes) {
      ++differing;
      if (example.empty()) example = name;
    }
  }
  missing += static_cast<int>(b.size() > a.size() ? b.size() - a.size() : 0);
  fs::rename(kept, root / "pipeline_first_kept");
  return {differing == 0 && missing == 0 && !a.empty(),
          fmt::format("two runs with seed {}: {} files ({} checkpoints, {} rasters), {} differ, {} missing{}", kSeed,
                      a.size(), ckpt, png, differing, missing, example.empty() ? "" : ", e.g. " + example)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / ("wsimil_acceptance_" +
                                                                                    std::to_string(getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  std::cout << "acceptance work directory: " << root.string() << std::endl;

  std::map<int, std::pair<std::string, Outcome>> results;
  auto record = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    const auto o = guarded(f);
    report(id, name, o);
    results[id] = {name, o};
  };

  record(8, "streaming scale", streaming_scale);
  record(5, "gradient integrity", gradient_integrity);
  record(6, "oracle equivalence", oracle_equivalence);
  record(7, "QC rules", qc_rules);
  record(9, "stratification", stratification);

  const auto pipeline = run_pipeline(root / "pipeline", root / "pipeline_first.log");
  record(1, "planted-signal learning", [&] { return planted_learning(pipeline); });
  record(3, "attention localization", [&] { return attention_localization(pipeline); });
  record(4, "attention Dice", [&] { return attention_dice(pipeline); });
  record(10, "HIF pipeline", [&] { return hif_pipeline(pipeline, root); });
  record(2, "null control", [&] { return null_control(root); });
  record(11, "determinism", [&] { return determinism(pipeline, root); });

  std::cout << "\nsummary" << std::endl;
  int failed = 0;
  std::ofstream out("acceptance_results.txt");
  for (const auto& [id, entry] : results) {
    const auto line =
        fmt::format("[{}] {:>2} {}: {}", entry.second.pass ? "PASS" : "FAIL", id, entry.first, entry.second.detail);
    std::cout << line << std::endl;
    out << line << '\n';
    failed += !entry.second.pass;
  }
  std::cout << fmt::format("{} of {} criteria passed", results.size() - failed, results.size()) << std::endl;
  out << fmt::format("{} of {} criteria passed\n", results.size() - failed, results.size());
  if (failed == 0) fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
