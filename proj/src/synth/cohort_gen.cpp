#include "wsimil/synth/cohort_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "wsimil/common/error.hpp"
#include "wsimil/common/parallel.hpp"
#include "wsimil/common/rng.hpp"
#include "wsimil/embed/pseudo_encoder.hpp"
#include "wsimil/qc/qc_io.hpp"

namespace wsimil::synth {

namespace {

void check_range(const std::array<double, 2>& r, const char* name) {
  if (!(r[0] >= 0.0 && r[1] <= 1.0 && r[0] <= r[1]))
    throw DataError(std::string(name) + " must be a range within [0, 1]");
}

double draw(const std::array<double, 2>& r, std::mt19937_64& rng) {
  if (r[0] == r[1]) return r[0];
  return std::uniform_real_distribution<double>(r[0], r[1])(rng);
}

/// Random-frontier region growing from `start` over `allowed` cells.
std::vector<std::uint8_t> grow_blob(int cols, int rows, const std::vector<std::uint8_t>& allowed, int start,
                                    int target, std::mt19937_64& rng) {
  std::vector<std::uint8_t> blob(allowed.size(), 0), queued(allowed.size(), 0);
  std::vector<int> frontier{start};
  queued[start] = 1;
  int grown = 0;
  while (grown < target && !frontier.empty()) {
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng);
    const int cell = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    blob[cell] = 1;
    ++grown;
    const int c = cell % cols, r = cell / cols;
    const int nbr[4][2] = {{c - 1, r}, {c + 1, r}, {c, r - 1}, {c, r + 1}};
    for (const auto& [nc, nr] : nbr) {
      if (nc < 0 || nr < 0 || nc >= cols || nr >= rows) continue;
      const int n = nr * cols + nc;
      if (allowed[n] && !queued[n]) {
        queued[n] = 1;
        frontier.push_back(n);
      }
    }
  }
  return blob;
}

struct PatientPlan {
  std::string patient_id;
  int positive = 0;
  slide::Diagnosis diagnosis = slide::Diagnosis::CD;
  slide::BiopsyLocation location = slide::BiopsyLocation::Colon;
  int score = 0;
};

struct SlideResult {
  SlideLayout layout;
  SlideTruth truth;
  embed::EmbeddingBag bag;
  std::vector<heatmap::CellRecord> cells;
};

std::vector<std::vector<double>> unit_vectors(int count, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> out(count, std::vector<double>(dim));
  for (auto& v : out) {
    double norm = 0.0;
    for (double& x : v) {
      x = n(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return out;
}

SlideResult generate_slide(const SynthConfig& cfg, const std::string& slide_id, const PatientPlan& patient,
                           const std::vector<std::vector<double>>& prototypes, const std::vector<double>& signal,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int cols = cfg.grid_cols, rows = cfg.grid_rows, n = cols * rows;
  SlideResult out;
  auto& t = out.truth;
  t.slide_id = slide_id;
  t.patient_id = patient.patient_id;
  t.cols = cols;
  t.rows = rows;
  t.planted_label = patient.positive;

  // Tissue: one blob grown from near the centre.
  const std::vector<std::uint8_t> everywhere(n, 1);
  const int tissue_target = std::max(1, static_cast<int>(std::lround(draw(cfg.tissue_fraction, rng) * n)));
  const int c0 = cols / 2 + std::uniform_int_distribution<int>(-cols / 6, cols / 6)(rng);
  const int r0 = rows / 2 + std::uniform_int_distribution<int>(-rows / 6, rows / 6)(rng);
  t.tissue = grow_blob(cols, rows, everywhere, r0 * cols + c0, tissue_target, rng);
  const int tissue_count = static_cast<int>(std::count(t.tissue.begin(), t.tissue.end(), 1));

  // Lesion: a blob inside the tissue on positive slides.
  t.lesion.assign(n, 0);
  if (patient.positive) {
    const double f = draw(cfg.lesion_fraction, rng);
    const int target = std::max(1, static_cast<int>(std::lround(f * tissue_count)));
    std::vector<int> tissue_cells;
    for (int i = 0; i < n; ++i)
      if (t.tissue[i]) tissue_cells.push_back(i);
    const int start = tissue_cells[std::uniform_int_distribution<std::size_t>(0, tissue_cells.size() - 1)(rng)];
    t.lesion = grow_blob(cols, rows, t.tissue, start, target, rng);
  }

  // Layout on the patch grid; artefacts planted at pixel level.
  auto& layout = out.layout;
  layout = SlideLayout::blank(slide_id, std::int64_t{cols} * cfg.tile_size, std::int64_t{rows} * cfg.tile_size,
                              cfg.tile_size, derive_seed(seed, 7));
  layout.tissue = t.tissue;
  layout.lesion = t.lesion;
  const double artefact_target = draw(cfg.artefact_fraction, rng);
  const auto planted = plant_artefacts(layout, artefact_target, derive_seed(seed, 8));
  const double tissue_area = static_cast<double>(layout.tissue_area());
  t.planted_artefact_fraction = tissue_area > 0 ? static_cast<double>(planted) / tissue_area : 0.0;
  t.artefact.assign(n, 0);
  // Patch coverage estimated on an 8-pixel sampling lattice.
  const int sample = cfg.tile_size % 8 == 0 ? 8 : 1;
  const int per = cfg.tile_size / sample;
  const auto classes = ground_truth_classes(layout, 0, 0, cols * per, rows * per, sample);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!t.tissue[r * cols + c]) continue;
      int hits = 0;
      for (int y = r * per; y < (r + 1) * per; ++y)
        for (int x = c * per; x < (c + 1) * per; ++x) hits += classes.get(x, y) == qc::PixelClass::Artefact;
      t.artefact[r * cols + c] = 2 * hits >= per * per;
    }

  auto usable = [&](int i) { return t.tissue[i] && !t.artefact[i]; };

  if (cfg.mode == SynthMode::Bags) {
    auto& bag = out.bag;
    bag.slide_id = slide_id;
    bag.encoder_id = "synthetic/v1/seed=" + std::to_string(cfg.seed) + "/dim=" + std::to_string(cfg.dim);
    bag.dim = static_cast<std::uint32_t>(cfg.dim);
    bag.tile_size = static_cast<std::uint32_t>(cfg.tile_size);
    // Spatially clustered background morphology: three centres, each with a prototype.
    struct Centre {
      double c, r;
      int proto;
    };
    std::vector<Centre> centres;
    for (int k = 0; k < 3; ++k)
      centres.push_back({std::uniform_real_distribution<double>(0, cols)(rng),
                         std::uniform_real_distribution<double>(0, rows)(rng),
                         std::uniform_int_distribution<int>(0, cfg.prototypes - 1)(rng)});
    std::normal_distribution<double> noise(0.0, cfg.noise_sd / std::sqrt(static_cast<double>(cfg.dim)));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const int i = r * cols + c;
        if (!usable(i)) continue;
        int proto = centres[0].proto;
        double best = 1e300;
        for (const auto& ce : centres) {
          const double d = (ce.c - c - 0.5) * (ce.c - c - 0.5) + (ce.r - r - 0.5) * (ce.r - r - 0.5);
          if (d < best) {
            best = d;
            proto = ce.proto;
          }
        }
        bag.coords.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)});
        for (int d = 0; d < cfg.dim; ++d) {
          double v = cfg.prototype_scale * prototypes[proto][d] + noise(rng);
          if (t.lesion[i]) v += cfg.signal_strength * signal[d];
          bag.values.push_back(static_cast<float>(v));
        }
      }
  }

  if (cfg.emit_cells) {
    std::uniform_real_distribution<double> pos(0.0, static_cast<double>(cfg.tile_size));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const int i = r * cols + c;
        if (!usable(i)) continue;
        const auto& rates = t.lesion[i] ? cfg.lesion_cell_rates : cfg.normal_cell_rates;
        for (int k = 0; k < heatmap::kCellClasses; ++k) {
          const int count = rates[k] > 0 ? std::poisson_distribution<int>(rates[k])(rng) : 0;
          for (int m = 0; m < count; ++m) {
            const double x = c * cfg.tile_size + pos(rng);
            const double y = r * cfg.tile_size + pos(rng);
            out.cells.push_back({slide_id, std::round(x * 10) / 10, std::round(y * 10) / 10,
                                 static_cast<heatmap::CellClass>(k)});
          }
        }
      }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_patients < 1) throw DataError("n_patients must be positive");
  if (n_slides < n_patients) throw DataError("n_slides must be at least n_patients");
  if (!(positive_fraction >= 0 && positive_fraction <= 1)) throw DataError("positive_fraction must be in [0, 1]");
  if (grid_cols < 2 || grid_rows < 2) throw DataError("slide grid must be at least 2 x 2 patches");
  if (tile_size < 16) throw DataError("tile_size must be at least 16");
  check_range(tissue_fraction, "tissue_fraction");
  check_range(lesion_fraction, "lesion_fraction");
  check_range(artefact_fraction, "artefact_fraction");
  if (tissue_fraction[0] * grid_cols * grid_rows < 1.0)
    throw DataError("slide grid too small: minimum tissue fraction covers less than one patch");
  if (dim < 8) throw DataError("dim must be at least 8");
  if (prototypes < 1) throw DataError("prototypes must be positive");
  if (signal_strength < 0 || noise_sd < 0) throw DataError("signal_strength and noise_sd must be non-negative");
  for (double r : normal_cell_rates)
    if (r < 0) throw DataError("cell rates must be non-negative");
  for (double r : lesion_cell_rates)
    if (r < 0) throw DataError("cell rates must be non-negative");
  if (mislabeled_slides < 0) throw DataError("mislabeled_slides must be non-negative");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_patients", n_patients},
          {"n_slides", n_slides},
          {"positive_fraction", positive_fraction},
          {"grid_cols", grid_cols},
          {"grid_rows", grid_rows},
          {"tile_size", tile_size},
          {"microns_per_pixel", microns_per_pixel},
          {"tissue_fraction", tissue_fraction},
          {"lesion_fraction", lesion_fraction},
          {"artefact_fraction", artefact_fraction},
          {"dim", dim},
          {"signal_strength", signal_strength},
          {"prototype_scale", prototype_scale},
          {"noise_sd", noise_sd},
          {"prototypes", prototypes},
          {"normal_cell_rates", normal_cell_rates},
          {"lesion_cell_rates", lesion_cell_rates},
          {"mislabeled_slides", mislabeled_slides},
          {"shuffle_labels", shuffle_labels},
          {"emit_cells", emit_cells},
          {"mode", mode == SynthMode::Bags ? "bags" : "pixels"},
          {"seed", seed}};
}

SynthConfig SynthConfig::preset(const std::string& name) {
  SynthConfig c;
  if (name == "default") return c;
  if (name == "small") {
    c.n_patients = 20;
    c.n_slides = 40;
    c.grid_cols = c.grid_rows = 8;
    c.lesion_fraction = {0.15, 0.15};
    return c;
  }
  if (name == "pixels") {
    c.n_patients = 12;
    c.n_slides = 24;
    c.grid_cols = c.grid_rows = 6;
    c.lesion_fraction = {0.2, 0.2};
    c.mode = SynthMode::Pixels;
    return c;
  }
  if (name == "hif-null") {
    c.lesion_cell_rates = c.normal_cell_rates;
    return c;
  }
  throw DataError("unknown synthetic preset '" + name + "' (expected default, small, pixels or hif-null)");
}

double SlideTruth::accepted_pixels(int tile_size) const {
  double n = 0;
  for (std::size_t i = 0; i < tissue.size(); ++i) n += tissue[i] && !artefact[i];
  return n * tile_size * tile_size;
}

const SlideTruth* GroundTruth::find(const std::string& slide_id) const {
  for (const auto& s : slides)
    if (s.slide_id == slide_id) return &s;
  return nullptr;
}

namespace {

std::string grid_string(const std::vector<std::uint8_t>& g) {
  std::string s(g.size(), '0');
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i]) s[i] = '1';
  return s;
}

std::vector<std::uint8_t> grid_from(const std::string& s, std::size_t n) {
  if (s.size() != n) throw DataError("ground truth grid has the wrong size");
  std::vector<std::uint8_t> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = s[i] == '1';
  return g;
}

}  // namespace

nlohmann::json GroundTruth::to_json() const {
  nlohmann::json j;
  j["slides"] = nlohmann::json::array();
  for (const auto& s : slides)
    j["slides"].push_back({{"slide_id", s.slide_id},
                           {"patient_id", s.patient_id},
                           {"cols", s.cols},
                           {"rows", s.rows},
                           {"tissue", grid_string(s.tissue)},
                           {"lesion", grid_string(s.lesion)},
                           {"artefact", grid_string(s.artefact)},
                           {"planted_label", s.planted_label},
                           {"manifest_label", s.manifest_label},
                           {"planted_artefact_fraction", s.planted_artefact_fraction}});
  return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  GroundTruth g;
  try {
    for (const auto& s : j.at("slides")) {
      SlideTruth t;
      t.slide_id = s.at("slide_id").get<std::string>();
      t.patient_id = s.at("patient_id").get<std::string>();
      t.cols = s.at("cols").get<int>();
      t.rows = s.at("rows").get<int>();
      const auto n = static_cast<std::size_t>(t.cols) * t.rows;
      t.tissue = grid_from(s.at("tissue").get<std::string>(), n);
      t.lesion = grid_from(s.at("lesion").get<std::string>(), n);
      t.artefact = grid_from(s.at("artefact").get<std::string>(), n);
      t.planted_label = s.at("planted_label").get<int>();
      t.manifest_label = s.at("manifest_label").get<int>();
      t.planted_artefact_fraction = s.at("planted_artefact_fraction").get<double>();
      g.slides.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid ground truth: ") + e.what());
  }
  return g;
}

SynthCohort generate_cohort(const SynthConfig& config, int workers) {
  config.validate();
  SynthCohort cohort;
  cohort.config = config;
  std::mt19937_64 rng(derive_seed(config.seed, 1));

  // Patient-level plan: exact positive count, then diagnosis/location/score.
  const int n_pos = static_cast<int>(std::lround(config.positive_fraction * config.n_patients));
  std::vector<int> positive(config.n_patients, 0);
  std::fill(positive.begin(), positive.begin() + n_pos, 1);
  std::shuffle(positive.begin(), positive.end(), rng);
  std::vector<PatientPlan> patients(config.n_patients);
  char buf[32];
  for (int p = 0; p < config.n_patients; ++p) {
    auto& pl = patients[p];
    std::snprintf(buf, sizeof buf, "P%03d", p + 1);
    pl.patient_id = buf;
    pl.positive = positive[p];
    pl.diagnosis = std::bernoulli_distribution(0.65)(rng) ? slide::Diagnosis::CD : slide::Diagnosis::UC;
    pl.location = pl.diagnosis == slide::Diagnosis::CD
                      ? (std::bernoulli_distribution(0.5)(rng) ? slide::BiopsyLocation::Ileum : slide::BiopsyLocation::Colon)
                      : (std::bernoulli_distribution(0.7)(rng) ? slide::BiopsyLocation::Colon : slide::BiopsyLocation::Rectum);
    pl.score = pl.positive ? std::uniform_int_distribution<int>(1, 3)(rng) : 0;
  }

  // Slides per patient: the first (n_slides mod n_patients) get one extra.
  struct SlidePlan {
    std::string slide_id;
    int patient;
  };
  std::vector<SlidePlan> plan;
  const int base = config.n_slides / config.n_patients, extra = config.n_slides % config.n_patients;
  for (int p = 0; p < config.n_patients; ++p)
    for (int s = 0; s < base + (p < extra ? 1 : 0); ++s) {
      std::snprintf(buf, sizeof buf, "%s_S%d", patients[p].patient_id.c_str(), s + 1);
      plan.push_back({buf, p});
    }

  auto proto_rng = std::mt19937_64(derive_seed(config.seed, 2));
  const auto prototypes = unit_vectors(config.prototypes, config.dim, proto_rng);
  const auto signal = unit_vectors(1, config.dim, proto_rng).front();

  std::vector<SlideResult> results(plan.size());
  parallel_for(plan.size(), workers, [&](std::size_t i, int) {
    results[i] = generate_slide(config, plan[i].slide_id, patients[plan[i].patient], prototypes, signal,
                                derive_seed(config.seed, 1000 + i));
  });

  // Labels written to the manifest: optionally shuffled across patients,
  // optionally flipped on a few positive slides.
  std::vector<int> label_source(config.n_patients);
  for (int p = 0; p < config.n_patients; ++p) label_source[p] = p;
  if (config.shuffle_labels) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 3));
    std::shuffle(label_source.begin(), label_source.end(), shuffle_rng);
  }
  std::vector<std::size_t> flipped;
  {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (patients[label_source[plan[i].patient]].positive) candidates.push_back(i);
    std::mt19937_64 flip_rng(derive_seed(config.seed, 4));
    std::shuffle(candidates.begin(), candidates.end(), flip_rng);
    const auto n = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(config.mislabeled_slides));
    flipped.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n));
  }

  for (std::size_t i = 0; i < plan.size(); ++i) {
    auto& res = results[i];
    const auto& own = patients[plan[i].patient];
    const auto& labels = patients[label_source[plan[i].patient]];
    slide::SlideRecord rec;
    rec.slide_id = plan[i].slide_id;
    rec.patient_id = own.patient_id;
    rec.diagnosis = own.diagnosis;
    rec.location = own.location;
    rec.microns_per_pixel = config.microns_per_pixel;
    rec.image_path = "slides/" + rec.slide_id + ".synth.json";
    int label = labels.positive;
    int score = labels.score;
    if (std::find(flipped.begin(), flipped.end(), i) != flipped.end()) {
      label = 0;
      score = 0;
    }
    rec.macroscopic = label ? (score >= 2 ? slide::Macroscopic::ErosionsUlcers : slide::Macroscopic::Inflammation)
                            : slide::Macroscopic::Normal;
    rec.endoscopic_score = score;
    res.truth.manifest_label = label;
    cohort.manifest.records.push_back(std::move(rec));
    cohort.truth.slides.push_back(std::move(res.truth));
    cohort.layouts.push_back(std::move(res.layout));
    if (config.mode == SynthMode::Bags) cohort.bags.push_back(std::move(res.bag));
    cohort.cells.insert(cohort.cells.end(), res.cells.begin(), res.cells.end());
  }
  return cohort;
}

namespace {

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

void write_cohort(const SynthCohort& cohort, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "slides");
  slide::save_manifest(dir / "manifest.csv", cohort.manifest);
  for (const auto& l : cohort.layouts) save_slide_layout(dir / "slides" / (l.slide_id + ".synth.json"), l);
  write_json_file(dir / "ground_truth.json", cohort.truth.to_json());
  write_json_file(dir / "synth.json", cohort.config.to_json());
  if (cohort.config.emit_cells) heatmap::save_cells(dir / "cells.csv", cohort.cells);
  if (cohort.config.mode == SynthMode::Bags) {
    fs::create_directories(dir / "bags");
    fs::create_directories(dir / "qc");
    const double tile_px = static_cast<double>(cohort.config.tile_size) * cohort.config.tile_size;
    for (const auto& b : cohort.bags) embed::write_bag(embed::bag_path(dir / "bags", b.slide_id), b);
    for (const auto& t : cohort.truth.slides) {
      qc::QcSummary s;
      s.slide_id = t.slide_id;
      double tissue = 0, artefact = 0;
      for (std::size_t i = 0; i < t.tissue.size(); ++i) {
        tissue += t.tissue[i];
        artefact += t.tissue[i] && t.artefact[i];
      }
      const double total = static_cast<double>(t.tissue.size());
      s.accepted = (tissue - artefact) / total;
      s.artefact = artefact / total;
      s.background = 1.0 - tissue / total;
      s.tissue_fraction_rejected = tissue > 0 ? artefact / tissue : 1.0;
      s.excluded = tissue == 0 || s.tissue_fraction_rejected > qc::kSlideRejectionLimit;
      s.accepted_pixels = (tissue - artefact) * tile_px;
      s.artefact_pixels = artefact * tile_px;
      s.background_pixels = (total - tissue) * tile_px;
      s.patches = static_cast<std::size_t>(tissue);
      s.kept_patches = static_cast<std::size_t>(tissue - artefact);
      write_json_file(dir / "qc" / (t.slide_id + ".json"), {{"summary", qc::summary_to_json(s)}, {"source", "synthetic ground truth"}});
    }
  }
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return GroundTruth::from_json(j);
}

slide::CohortManifest stratification_cohort(int n_patients, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 9));
  slide::CohortManifest m;
  char buf[32];
  std::discrete_distribution<int> cd_location({0.45, 0.45, 0.0, 0.10});
  std::discrete_distribution<int> uc_location({0.0, 0.75, 0.25, 0.0});
  std::discrete_distribution<int> slides({0.0, 0.35, 0.25, 0.25, 0.15});  // 1-4 slides
  for (int p = 0; p < n_patients; ++p) {
    std::snprintf(buf, sizeof buf, "SP%04d", p + 1);
    const std::string pid = buf;
    const bool cd = std::bernoulli_distribution(0.657)(rng);
    const bool lesional = std::bernoulli_distribution(0.34)(rng);
    const auto location = static_cast<slide::BiopsyLocation>(cd ? cd_location(rng) : uc_location(rng));
    const int score = lesional ? std::uniform_int_distribution<int>(1, 3)(rng) : 0;
    const int k = slides(rng);
    for (int s = 0; s < k; ++s) {
      slide::SlideRecord r;
      std::snprintf(buf, sizeof buf, "%s_S%d", pid.c_str(), s + 1);
      r.slide_id = buf;
      r.patient_id = pid;
      r.diagnosis = cd ? slide::Diagnosis::CD : slide::Diagnosis::UC;
      r.location = location;
      r.macroscopic = lesional ? slide::Macroscopic::Inflammation : slide::Macroscopic::Normal;
      r.endoscopic_score = score;
      r.image_path = "slides/" + r.slide_id + ".synth.json";
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

}  // namespace wsimil::synth
