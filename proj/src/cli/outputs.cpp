#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "run_io.hpp"
#include "wsimil/cli/commands.hpp"
#include "wsimil/cli/workspace.hpp"
#include "wsimil/common/csv.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/common/parallel.hpp"
#include "wsimil/common/png_io.hpp"
#include "wsimil/heatmap/attention_map.hpp"
#include "wsimil/heatmap/cells.hpp"
#include "wsimil/qc/extract.hpp"
#include "wsimil/qc/qc_io.hpp"
#include "wsimil/synth/cohort_gen.hpp"
#include "wsimil/train/metrics.hpp"

namespace wsimil::cli {

namespace {

struct PredictionRow {
  std::string slide_id;
  int fold = 0;
  int label = 0;
  double probability = 0.0;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string() + "; run `train` first");
  CsvReader reader(in);
  std::vector<PredictionRow> rows;
  while (reader.next()) {
    try {
      rows.push_back({reader.get("slide_id"), std::stoi(reader.get("fold")), std::stoi(reader.get("label")),
                      std::stod(reader.get("probability"))});
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("{}: malformed row {}", path.string(), reader.row_number()));
    }
  }
  return rows;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

heatmap::GridMask truth_mask(const synth::SlideTruth& t, const std::vector<std::uint8_t>& g) {
  heatmap::GridMask m(t.cols, t.rows);
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) m.set(c, r, t.at(g, c, r));
  return m;
}

}  // namespace

void run_attention(const AttentionOptions& o, const Common& c) {
  if (o.run.empty()) throw DataError("--run is required");
  const auto run = detail::load_run(o.run);
  const auto predictions = read_predictions(o.run / "predictions.csv");
  const auto manifest = slide::load_manifest(run.manifest);
  const fs::path out = or_default(o.out, run.work / "attention" / o.run.filename());
  fs::create_directories(out);

  std::optional<synth::GroundTruth> truth;
  const fs::path truth_path = or_default(o.ground_truth, run.work / "ground_truth.json");
  if (fs::exists(truth_path)) truth = synth::load_ground_truth(truth_path);

  std::map<int, std::unique_ptr<mil::MilHead>> models;
  for (const auto& p : predictions)
    if (!models.count(p.fold)) models[p.fold] = detail::load_fold_model(run, p.fold);

  struct Row {
    std::optional<double> dice_truth, attention_auroc, dice_annotation;
  };
  std::vector<Row> rows(predictions.size());
  parallel_for(predictions.size(), c.workers, [&](std::size_t i, int) {
    const auto& p = predictions[i];
    const auto* rec = manifest.find(p.slide_id);
    if (!rec) throw DataError("slide " + p.slide_id + " from predictions.csv is not in the manifest");
    const auto bag = embed::read_bag(embed::bag_path(run.bags, p.slide_id));
    const auto prepared = mil::prepare_bag(bag, run.config);
    const auto result = models.at(p.fold)->infer(prepared.instances);
    const auto att = mil::patch_attention(prepared, result.instance_attention);
    const auto dims = slide_grid(run.work, run.manifest, *rec, static_cast<int>(bag.tile_size), &bag);
    const auto map = heatmap::rasterize_attention(p.slide_id, att, bag.coords, dims.cols, dims.rows,
                                                  static_cast<int>(bag.tile_size),
                                                  static_cast<int>(bag.level_downsample));
    heatmap::write_attention_png(out / ("attention_" + p.slide_id + ".png"), map, o.png_scale);
    heatmap::write_attention_csv(out / ("attention_" + p.slide_id + ".csv"), map);

    const auto predicted = heatmap::threshold_map(map, o.threshold);
    if (truth) {
      const auto* st = truth->find(p.slide_id);
      if (st && st->planted_label == 1 && st->cols == map.cols && st->rows == map.rows) {
        auto lesion = truth_mask(*st, st->lesion);
        for (int r = 0; r < map.rows; ++r)
          for (int col = 0; col < map.cols; ++col)
            if (map.get(col, r) == heatmap::kNoTissue) lesion.set(col, r, false);
        rows[i].dice_truth = heatmap::dice(predicted, lesion);
        std::vector<int> labels;
        for (const auto& t : bag.coords) labels.push_back(lesion.get(static_cast<int>(t.col), static_cast<int>(t.row)));
        const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                          std::count(labels.begin(), labels.end(), 0) > 0;
        if (both) rows[i].attention_auroc = train::auroc(att, labels);
      }
    }
    if (!o.annotations.empty()) {
      const fs::path ann = o.annotations / (p.slide_id + ".json");
      if (fs::exists(ann)) {
        const auto mask = heatmap::rasterize_annotations(heatmap::load_annotations(ann), map.cols, map.rows,
                                                         std::int64_t{map.tile_size} * map.level_downsample);
        rows[i].dice_annotation = heatmap::dice(predicted, mask);
      }
    }
  });

  std::ostringstream csv;
  csv << "slide_id,fold,label,probability,dice_truth,attention_auroc,dice_annotation\n";
  std::vector<double> dices, aurocs, ann_dices;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    csv << p.slide_id << ',' << p.fold << ',' << p.label << ',' << num(p.probability) << ','
        << opt_num(rows[i].dice_truth) << ',' << opt_num(rows[i].attention_auroc) << ','
        << opt_num(rows[i].dice_annotation) << '\n';
    if (rows[i].dice_truth) dices.push_back(*rows[i].dice_truth);
    if (rows[i].attention_auroc) aurocs.push_back(*rows[i].attention_auroc);
    if (rows[i].dice_annotation) ann_dices.push_back(*rows[i].dice_annotation);
  }
  write_text_file(out / "summary.csv", csv.str());
  auto mean = [](const std::vector<double>& v) -> nlohmann::json {
    if (v.empty()) return nullptr;
    return train::mean_and_se(v).first;
  };
  write_json_file(out / "summary.json", {{"threshold", o.threshold},
                                         {"slides", predictions.size()},
                                         {"truth_slides", dices.size()},
                                         {"mean_dice_truth", mean(dices)},
                                         {"mean_attention_auroc", mean(aurocs)},
                                         {"annotated_slides", ann_dices.size()},
                                         {"mean_dice_annotation", mean(ann_dices)}});
  write_run_json(out, "attention",
                 {{"run", fs::absolute(o.run).lexically_normal().string()},
                  {"threshold", o.threshold},
                  {"annotations", o.annotations.string()},
                  {"ground_truth", truth ? truth_path.string() : std::string()},
                  {"png_scale", o.png_scale},
                  {"seed", c.seed}});
  spdlog::info("attention: {} overlays in {}", predictions.size(), out.string());
}

namespace {

std::map<std::string, std::vector<heatmap::CellRecord>> cells_by_slide(const fs::path& path) {
  std::map<std::string, std::vector<heatmap::CellRecord>> out;
  for (auto& cell : heatmap::load_cells(path)) out[cell.slide_id].push_back(std::move(cell));
  return out;
}

std::vector<heatmap::CellClass> parse_classes(const std::vector<std::string>& names) {
  std::vector<heatmap::CellClass> out;
  if (names.empty()) {
    for (int k = 0; k < heatmap::kCellClasses; ++k) out.push_back(static_cast<heatmap::CellClass>(k));
  } else {
    for (const auto& n : names) out.push_back(heatmap::parse_cell_class(n));
  }
  return out;
}

}  // namespace

void run_cells(const CellsOptions& o, const Common& c) {
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const fs::path cells_path = or_default(o.cells, o.work / "cells.csv");
  const fs::path out = or_default(o.out, o.work / "cells");
  const auto manifest = slide::load_manifest(manifest_path);
  const auto cells = cells_by_slide(cells_path);
  const auto classes = parse_classes(o.classes);
  fs::create_directories(out);

  for (const auto& [id, _] : cells)
    if (!manifest.find(id)) spdlog::warn("cells: slide {} is not in the manifest; its cells are ignored", id);

  const auto& records = manifest.records;
  std::vector<std::string> lines(records.size());
  parallel_for(records.size(), c.workers, [&](std::size_t i, int) {
    const auto& rec = records[i];
    const auto it = cells.find(rec.slide_id);
    const std::span<const heatmap::CellRecord> slide_cells =
        it == cells.end() ? std::span<const heatmap::CellRecord>() : std::span<const heatmap::CellRecord>(it->second);
    const auto dims = slide_grid(o.work, manifest_path, rec, o.tile_size, nullptr);
    qc::TileGrid grid;
    grid.slide_width = dims.width;
    grid.slide_height = dims.height;
    grid.tile_size = o.tile_size;

    std::vector<std::uint8_t> tissue(static_cast<std::size_t>(dims.cols) * dims.rows, 1);
    const fs::path list_path = o.work / "tiles" / (rec.slide_id + ".json");
    if (fs::exists(list_path)) {
      const auto list = qc::read_tile_list(list_path);
      if (list.tile_size == o.tile_size && list.level_downsample == 1) {
        std::fill(tissue.begin(), tissue.end(), 0);
        for (const auto& t : list.tiles) tissue[static_cast<std::size_t>(t.row) * dims.cols + t.col] = 1;
      }
    }

    std::ostringstream line;
    for (const auto cls : classes) {
      const auto hm = heatmap::cell_density_heatmap(slide_cells, grid, cls, rec.microns_per_pixel);
      const std::string stem = fmt::format("{}_{}", rec.slide_id, heatmap::to_string(cls));
      std::ostringstream csv;
      csv << "col,row,count,density\n";
      double peak = 0.0;
      for (std::size_t k = 0; k < hm.counts.size(); ++k) peak = std::max(peak, hm.densities[k]);
      heatmap::AttentionMap map;
      map.slide_id = rec.slide_id;
      map.cols = hm.cols;
      map.rows = hm.rows;
      map.tile_size = o.tile_size;
      map.values.assign(hm.counts.size(), heatmap::kNoTissue);
      std::size_t total = 0;
      for (int r = 0; r < hm.rows; ++r)
        for (int col = 0; col < hm.cols; ++col) {
          const std::size_t k = static_cast<std::size_t>(r) * hm.cols + col;
          total += static_cast<std::size_t>(hm.counts[k]);
          csv << col << ',' << r << ',' << hm.counts[k] << ',' << num(hm.densities[k], 3) << '\n';
          if (tissue[k]) map.values[k] = peak > 0 ? static_cast<float>(hm.densities[k] / peak) : 0.0f;
        }
      write_text_file(out / (stem + ".csv"), csv.str());
      heatmap::write_attention_png(out / (stem + ".png"), map, 8);
      line << rec.slide_id << ',' << heatmap::to_string(cls) << ',' << total << ',' << hm.skipped << ','
           << num(peak, 3) << '\n';
    }
    lines[i] = line.str();
  });

  std::string summary = "slide_id,cell_class,cells,skipped,peak_density\n";
  for (const auto& l : lines) summary += l;
  write_text_file(out / "summary.csv", summary);
  write_run_json(out, "cells", {{"manifest", manifest_path.string()},
                                {"cells", cells_path.string()},
                                {"classes", o.classes},
                                {"tile_size", o.tile_size},
                                {"seed", c.seed}});
  spdlog::info("cells: heatmaps for {} slides in {}", records.size(), out.string());
}

void run_hif(const HifOptions& o, const Common& c) {
  if (o.level != "patient" && o.level != "slide") throw DataError("--level must be patient or slide");
  const fs::path manifest_path = or_default(o.manifest, o.work / "manifest.csv");
  const fs::path cells_path = or_default(o.cells, o.work / "cells.csv");
  const fs::path out = or_default(o.out, o.work / "hif");
  const auto manifest = slide::load_manifest(manifest_path);
  const auto cells = cells_by_slide(cells_path);
  const auto qc_summaries = load_qc_summaries(o.work);

  // Units: one slide, or all slides of a patient pooled.
  struct Unit {
    std::string id;
    slide::Diagnosis diagnosis = slide::Diagnosis::CD;
    int score = 0;
    std::vector<heatmap::CellRecord> cells;
    double accepted_pixels = 0.0;
    double mpp = 0.5;
  };
  std::vector<Unit> units;
  std::map<std::string, std::size_t> index;
  for (const auto& rec : manifest.records) {
    const auto q = qc_summaries.find(rec.slide_id);
    if (q == qc_summaries.end())
      throw DataError("missing QC report for slide " + rec.slide_id + " in " + (o.work / "qc").string() +
                      "; run `qc` first");
    if (q->second.excluded) continue;
    const std::string key = o.level == "patient" ? rec.patient_id : rec.slide_id;
    auto [it, inserted] = index.emplace(key, units.size());
    if (inserted) units.push_back({key, rec.diagnosis, rec.endoscopic_score, {}, 0.0, rec.microns_per_pixel});
    auto& u = units[it->second];
    u.score = std::max(u.score, rec.endoscopic_score);
    u.accepted_pixels += q->second.accepted_pixels;
    if (auto cit = cells.find(rec.slide_id); cit != cells.end())
      u.cells.insert(u.cells.end(), cit->second.begin(), cit->second.end());
  }

  std::vector<heatmap::SlideHif> hifs;
  for (const auto& u : units) hifs.push_back(heatmap::compute_hifs(u.id, u.cells, u.accepted_pixels, u.mpp));

  const auto names = heatmap::hif_feature_names();
  std::ostringstream report;
  report << (o.level == "patient" ? "patient_id" : "slide_id") << ",diagnosis,endoscopic_score,group,cells,accepted_mm2";
  for (const auto& n : names) report << ',' << n;
  report << '\n';
  for (std::size_t i = 0; i < units.size(); ++i) {
    report << units[i].id << ',' << slide::to_string(units[i].diagnosis) << ',' << units[i].score << ','
           << (units[i].score > 0 ? "score_gt0" : "score0") << ',' << hifs[i].total << ','
           << num(hifs[i].accepted_area_mm2, 4);
    for (const auto& n : names) report << ',' << opt_num(heatmap::hif_feature(hifs[i], n));
    report << '\n';
  }

  std::ostringstream tests;
  tests << "feature,U,p,nA,nB\n";
  const std::vector<std::pair<std::string, std::optional<slide::Diagnosis>>> subsets{
      {"all", std::nullopt}, {"CD", slide::Diagnosis::CD}, {"UC", slide::Diagnosis::UC}};
  for (const auto& [subset, dx] : subsets) {
    for (const auto& n : names) {
      std::vector<double> a, b;  // a: score 0, b: score > 0
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (dx && units[i].diagnosis != *dx) continue;
        const auto v = heatmap::hif_feature(hifs[i], n);
        if (!v) continue;
        (units[i].score > 0 ? b : a).push_back(*v);
      }
      if (a.size() < 2 || b.size() < 2) {
        spdlog::debug("hif: {}/{} skipped, groups of {} and {}", subset, n, a.size(), b.size());
        continue;
      }
      const auto mw = heatmap::hif_group_test(a, b);
      tests << subset << '/' << n << ',' << num(mw.u, 1) << ',' << fmt::format("{:.6g}", mw.p) << ',' << mw.n_a << ','
            << mw.n_b << '\n';
    }
  }
  write_text_file(out / "hif_report.csv", report.str());
  write_text_file(out / "hif_tests.csv", tests.str());
  write_run_json(out, "hif", {{"manifest", manifest_path.string()},
                              {"cells", cells_path.string()},
                              {"level", o.level},
                              {"groups", "endoscopic score 0 (A) vs > 0 (B)"},
                              {"seed", c.seed}});
  spdlog::info("hif: {} {}s, tests in {}", units.size(), o.level, (out / "hif_tests.csv").string());
}

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void run_report(const ReportOptions& o, const Common& c) {
  const fs::path out = or_default(o.out, o.work / "report");
  fs::create_directories(out / "thumbs");
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>wsimil report</title>\n"
          "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
          "td,th{border:1px solid #ccc;padding:4px 8px}img{margin:4px;image-rendering:pixelated}</style>"
          "</head><body>\n<h1>wsimil report</h1>\n";

  // Cross-validation table: rows are heads, columns are tasks.
  std::map<std::string, std::map<std::string, std::string>> table;
  std::set<std::string> tasks;
  std::ostringstream cv_csv;
  cv_csv << "run,task,head,filters,mean_auroc,se_auroc,n_slides\n";
  const auto runs = sorted_dirs(o.work / "models");
  for (const auto& dir : runs) {
    if (!fs::exists(dir / "cv_result.json")) continue;
    const auto cv = read_json_file(dir / "cv_result.json");
    const std::string task = cv.value("task", "");
    std::string head = cv.value("head", "");
    const auto filters = cv.value("filters", std::vector<std::string>{});
    if (!filters.empty()) head += " [" + filter_tag(filters) + "]";
    tasks.insert(task);
    table[head][task] = cv.value("table", "");
    cv_csv << dir.filename().string() << ',' << task << ',' << cv.value("head", "") << ',' << filter_tag(filters) << ','
           << num(cv.value("mean_auroc", 0.0), 4) << ',' << num(cv.value("se_auroc", 0.0), 4) << ','
           << cv.value("n_slides", 0) << '\n';
  }
  write_text_file(out / "cv_table.csv", cv_csv.str());
  html << "<h2>Cross-validated AUROC (mean ± s.e. over folds)</h2>\n<table><tr><th>model</th>";
  for (const auto& t : tasks) html << "<th>" << html_escape(t) << "</th>";
  html << "</tr>\n";
  for (const auto& [head, row] : table) {
    html << "<tr><td>" << html_escape(head) << "</td>";
    for (const auto& t : tasks) html << "<td>" << (row.count(t) ? html_escape(row.at(t)) : "") << "</td>";
    html << "</tr>\n";
  }
  html << "</table>\n";

  // Comparisons and confident errors per run.
  for (const auto& dir : runs) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("eval", 0) != 0 || e.path().extension() != ".json") continue;
      const auto ev = read_json_file(e.path());
      if (!ev.contains("compare")) continue;
      const auto& cmp = ev["compare"];
      html << "<h3>" << html_escape(dir.filename().string()) << " vs " << html_escape(cmp.value("run", ""))
           << "</h3><p>" << html_escape(cmp.value("test", "")) << " t-test: t = " << html_escape(cmp["t"].dump())
           << ", dof = " << cmp.value("dof", 0.0) << ", p = " << fmt::format("{:.4g}", cmp.value("p", 1.0))
           << "</p>\n";
    }
    if (!fs::exists(dir / "cv_result.json")) continue;
    const auto cv = read_json_file(dir / "cv_result.json");
    if (cv.contains("confident_errors") && !cv["confident_errors"].empty()) {
      html << "<h3>Most confident errors: " << html_escape(dir.filename().string())
           << "</h3>\n<table><tr><th>slide</th><th>label</th><th>probability</th></tr>\n";
      for (const auto& err : cv["confident_errors"])
        html << "<tr><td>" << html_escape(err.value("slide_id", "")) << "</td><td>" << err.value("label", 0)
             << "</td><td>" << num(err.value("probability", 0.0), 3) << "</td></tr>\n";
      html << "</table>\n";
    }
  }

  // Thumbnails with attention overlays.
  const fs::path manifest_path = o.work / "manifest.csv";
  if (fs::exists(manifest_path)) {
    const auto manifest = slide::load_manifest(manifest_path);
    const auto attention_runs = sorted_dirs(o.work / "attention");
    html << "<h2>Slides</h2>\n";
    for (const auto& rec : manifest.records) {
      html << "<div><h4>" << html_escape(rec.slide_id) << "</h4>";
      try {
        const auto source = qc::open_slide(resolve_image(manifest_path, rec));
        const int ds = qc::auto_thumbnail_downsample(source->width(), source->height(), 256);
        qc::RgbImage thumb;
        source->read_region(0, 0, static_cast<int>(source->width() / ds), static_cast<int>(source->height() / ds), ds,
                            thumb);
        write_png(out / "thumbs" / (rec.slide_id + ".png"), thumb);
        html << "<img height=\"160\" src=\"thumbs/" << html_escape(rec.slide_id) << ".png\">";
      } catch (const Error& e) {
        spdlog::warn("report: no thumbnail for {}: {}", rec.slide_id, e.what());
      }
      for (const auto& a : attention_runs) {
        const fs::path png = a / ("attention_" + rec.slide_id + ".png");
        if (fs::exists(png))
          html << "<img height=\"160\" title=\"" << html_escape(a.filename().string()) << "\" src=\""
               << html_escape(fs::relative(png, out).generic_string()) << "\">";
      }
      const fs::path neut = o.work / "cells" / (rec.slide_id + "_neutrophil.png");
      if (fs::exists(neut))
        html << "<img height=\"160\" title=\"neutrophil density\" src=\""
             << html_escape(fs::relative(neut, out).generic_string()) << "\">";
      html << "</div>\n";
    }
  }
  html << "</body></html>\n";
  write_text_file(out / "index.html", html.str());
  write_run_json(out, "report", {{"work", o.work.string()}, {"seed", c.seed}});
  spdlog::info("report: {}", (out / "index.html").string());
}

}  // namespace wsimil::cli
