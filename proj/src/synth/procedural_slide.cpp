#include "wsimil/synth/procedural_slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "wsimil/common/error.hpp"
#include "wsimil/common/rng.hpp"

namespace wsimil::synth {

namespace {

struct Rgb {
  int r, g, b;
};

constexpr Rgb kBackground{242, 242, 242};
constexpr Rgb kTissue{232, 158, 192};
constexpr Rgb kLesion{205, 135, 195};
constexpr Rgb kBlack{36, 24, 40};
constexpr Rgb kFold{75, 35, 95};
constexpr Rgb kPen{60, 150, 80};
constexpr Rgb kNuclei[6] = {{150, 80, 160}, {110, 60, 150}, {90, 50, 140},
                            {120, 70, 150}, {140, 90, 170}, {200, 60, 110}};
constexpr int kNucleusRadius = 3;
constexpr int kNucleiNormal = 8;
constexpr int kNucleiLesion = 16;

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

void put(std::uint8_t* rgb, Rgb c, int delta) {
  rgb[0] = clamp8(c.r + delta);
  rgb[1] = clamp8(c.g + delta);
  rgb[2] = clamp8(c.b + delta);
}

std::uint64_t pixel_hash(std::uint64_t seed, std::int64_t x, std::int64_t y) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(x) * 0x9E3779B1ULL + static_cast<std::uint64_t>(y)));
}

int noise(std::uint64_t h, int amplitude) {
  return static_cast<int>(h % static_cast<std::uint64_t>(2 * amplitude + 1)) - amplitude;
}

}  // namespace

const char* to_string(ArtefactKind k) {
  switch (k) {
    case ArtefactKind::Black: return "black";
    case ArtefactKind::Fold: return "fold";
    case ArtefactKind::PenGreen: return "pen";
    case ArtefactKind::Blur: return "blur";
  }
  return "?";
}

ArtefactKind parse_artefact_kind(const std::string& s) {
  if (s == "black") return ArtefactKind::Black;
  if (s == "fold") return ArtefactKind::Fold;
  if (s == "pen") return ArtefactKind::PenGreen;
  if (s == "blur") return ArtefactKind::Blur;
  throw DataError("unknown artefact kind '" + s + "'");
}

SlideLayout SlideLayout::blank(std::string slide_id, std::int64_t width, std::int64_t height,
                               int cell_size, std::uint64_t seed) {
  if (width <= 0 || height <= 0 || cell_size <= 0) throw DataError("slide layout: invalid dimensions");
  SlideLayout l;
  l.slide_id = std::move(slide_id);
  l.width = width;
  l.height = height;
  l.cell_size = cell_size;
  l.cols = static_cast<int>((width + cell_size - 1) / cell_size);
  l.rows = static_cast<int>((height + cell_size - 1) / cell_size);
  l.tissue.assign(static_cast<std::size_t>(l.cols) * l.rows, 0);
  l.lesion.assign(l.tissue.size(), 0);
  l.seed = seed;
  return l;
}

std::int64_t SlideLayout::tissue_area() const {
  std::int64_t area = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (tissue_at(c, r)) {
        const std::int64_t w = std::min<std::int64_t>(cell_size, width - std::int64_t{c} * cell_size);
        const std::int64_t h = std::min<std::int64_t>(cell_size, height - std::int64_t{r} * cell_size);
        area += w * h;
      }
  return area;
}

std::int64_t SlideLayout::artefact_area() const {
  std::int64_t area = 0;
  for (const auto& a : artefacts) area += a.w * a.h;
  return area;
}

void SlideLayout::fill_tissue_rect(int c0, int r0, int c1, int r1) {
  for (int r = std::max(0, r0); r < std::min(rows, r1); ++r)
    for (int c = std::max(0, c0); c < std::min(cols, c1); ++c) set_tissue(c, r, true);
}

namespace {

std::vector<std::string> grid_to_rows(const SlideLayout& l, const std::vector<std::uint8_t>& g) {
  std::vector<std::string> out;
  for (int r = 0; r < l.rows; ++r) {
    std::string row(static_cast<std::size_t>(l.cols), '0');
    for (int c = 0; c < l.cols; ++c)
      if (g[static_cast<std::size_t>(r) * l.cols + c]) row[c] = '1';
    out.push_back(std::move(row));
  }
  return out;
}

void rows_to_grid(const SlideLayout& l, const nlohmann::json& j, std::vector<std::uint8_t>& g,
                  const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != l.rows)
    throw DataError(std::string("slide layout: '") + what + "' must have one string per grid row");
  for (int r = 0; r < l.rows; ++r) {
    const auto s = j[r].get<std::string>();
    if (static_cast<int>(s.size()) != l.cols)
      throw DataError(std::string("slide layout: '") + what + "' row " + std::to_string(r) + " has wrong length");
    for (int c = 0; c < l.cols; ++c) g[static_cast<std::size_t>(r) * l.cols + c] = s[c] == '1';
  }
}

}  // namespace

SlideLayout load_slide_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open slide layout " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    auto l = SlideLayout::blank(j.at("slide_id").get<std::string>(), j.at("width").get<std::int64_t>(),
                                j.at("height").get<std::int64_t>(), j.at("cell_size").get<int>(),
                                j.at("seed").get<std::uint64_t>());
    rows_to_grid(l, j.at("tissue"), l.tissue, "tissue");
    rows_to_grid(l, j.at("lesion"), l.lesion, "lesion");
    l.nuclei = j.value("nuclei", true);
    for (const auto& a : j.at("artefacts"))
      l.artefacts.push_back({parse_artefact_kind(a.at("kind").get<std::string>()), a.at("x").get<std::int64_t>(),
                             a.at("y").get<std::int64_t>(), a.at("w").get<std::int64_t>(),
                             a.at("h").get<std::int64_t>()});
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid slide layout: " + e.what());
  }
}

void save_slide_layout(const std::filesystem::path& path, const SlideLayout& l) {
  nlohmann::json j;
  j["slide_id"] = l.slide_id;
  j["width"] = l.width;
  j["height"] = l.height;
  j["cell_size"] = l.cell_size;
  j["seed"] = l.seed;
  j["nuclei"] = l.nuclei;
  j["tissue"] = grid_to_rows(l, l.tissue);
  j["lesion"] = grid_to_rows(l, l.lesion);
  j["artefacts"] = nlohmann::json::array();
  for (const auto& a : l.artefacts)
    j["artefacts"].push_back({{"kind", to_string(a.kind)}, {"x", a.x}, {"y", a.y}, {"w", a.w}, {"h", a.h}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write slide layout " + path.string());
  out << j.dump(1) << '\n';
}

ProceduralSlide::ProceduralSlide(SlideLayout layout) : layout_(std::move(layout)) {
  cell_artefacts_.resize(static_cast<std::size_t>(layout_.cols) * layout_.rows);
  const std::int64_t cs = layout_.cell_size;
  for (std::uint32_t i = 0; i < layout_.artefacts.size(); ++i) {
    const auto& a = layout_.artefacts[i];
    if (a.w <= 0 || a.h <= 0) continue;
    const int c0 = static_cast<int>(std::max<std::int64_t>(0, a.x / cs));
    const int r0 = static_cast<int>(std::max<std::int64_t>(0, a.y / cs));
    const int c1 = static_cast<int>(std::min<std::int64_t>(layout_.cols - 1, (a.x + a.w - 1) / cs));
    const int r1 = static_cast<int>(std::min<std::int64_t>(layout_.rows - 1, (a.y + a.h - 1) / cs));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) cell_artefacts_[static_cast<std::size_t>(r) * layout_.cols + c].push_back(i);
  }
}

void ProceduralSlide::render_pixel(std::int64_t x, std::int64_t y, std::uint8_t* rgb) const {
  const auto& l = layout_;
  if (x < 0 || y < 0 || x >= l.width || y >= l.height) {
    rgb[0] = rgb[1] = rgb[2] = 255;
    return;
  }
  const int c = static_cast<int>(x / l.cell_size);
  const int r = static_cast<int>(y / l.cell_size);
  const std::uint64_t h = pixel_hash(l.seed, x, y);
  if (!l.tissue_at(c, r)) {
    put(rgb, kBackground, noise(h, 3));
    return;
  }
  for (std::uint32_t i : cell_artefacts_[static_cast<std::size_t>(r) * l.cols + c]) {
    const auto& a = l.artefacts[i];
    if (!a.contains(x, y)) continue;
    switch (a.kind) {
      case ArtefactKind::Black: put(rgb, kBlack, noise(h, 6)); return;
      case ArtefactKind::Fold: put(rgb, kFold, noise(h, 5)); return;
      case ArtefactKind::PenGreen: put(rgb, kPen, noise(h, 8)); return;
      case ArtefactKind::Blur: {
        const int d = static_cast<int>(std::lround(6.0 * std::sin(static_cast<double>(x) / 40.0) *
                                                   std::cos(static_cast<double>(y) / 50.0)));
        put(rgb, kTissue, d);
        return;
      }
    }
  }
  const bool lesion = l.lesion_at(c, r);
  if (l.nuclei) {
    const int count = lesion ? kNucleiLesion : kNucleiNormal;
    const std::int64_t ox = std::int64_t{c} * l.cell_size, oy = std::int64_t{r} * l.cell_size;
    const int span = l.cell_size - 2 * kNucleusRadius - 1;
    if (span > 0) {
      const std::uint64_t cell_seed = mix64(l.seed ^ mix64(static_cast<std::uint64_t>(r) * l.cols + c + 1));
      for (int k = 0; k < count; ++k) {
        const std::uint64_t hk = mix64(cell_seed + static_cast<std::uint64_t>(k));
        const std::int64_t nx = ox + kNucleusRadius + static_cast<std::int64_t>(hk % span);
        const std::int64_t ny = oy + kNucleusRadius + static_cast<std::int64_t>((hk >> 20) % span);
        const std::int64_t dx = x - nx, dy = y - ny;
        if (dx * dx + dy * dy <= kNucleusRadius * kNucleusRadius) {
          // Lesions are enriched for neutrophils (1) and eosinophils (5).
          int cls = static_cast<int>((hk >> 40) % 6);
          if (lesion && ((hk >> 50) & 1)) cls = ((hk >> 51) & 1) ? 1 : 5;
          put(rgb, kNuclei[cls], noise(h, 6));
          return;
        }
      }
    }
  }
  put(rgb, lesion ? kLesion : kTissue, noise(h, 14));
}

void ProceduralSlide::read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                                  qc::RgbImage& out) const {
  if (w <= 0 || h <= 0 || downsample < 1) throw ShapeError("read_region: invalid region");
  if (out.width != w || out.height != h) out.resize(w, h);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      render_pixel(x + std::int64_t{i} * downsample, y + std::int64_t{j} * downsample, out.at(i, j));
}

qc::ClassMap ground_truth_classes(const SlideLayout& l, std::int64_t x, std::int64_t y, int w, int h,
                                  int downsample) {
  qc::ClassMap map(w, h);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const std::int64_t px = x + std::int64_t{i} * downsample, py = y + std::int64_t{j} * downsample;
      if (px < 0 || py < 0 || px >= l.width || py >= l.height) continue;
      if (!l.tissue_at(static_cast<int>(px / l.cell_size), static_cast<int>(py / l.cell_size))) continue;
      bool artefact = false;
      for (const auto& a : l.artefacts)
        if (a.contains(px, py)) {
          artefact = true;
          break;
        }
      map.set(i, j, artefact ? qc::PixelClass::Artefact : qc::PixelClass::Accepted);
    }
  return map;
}

std::int64_t plant_artefacts(SlideLayout& l, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DataError("artefact fraction must be in [0, 1]");
  std::vector<std::pair<int, int>> clean, lesional;
  const std::int64_t cs = l.cell_size;
  for (int r = 0; r < l.rows; ++r)
    for (int c = 0; c < l.cols; ++c) {
      // Only full cells, so planted area is exact.
      if (!l.tissue_at(c, r) || (c + 1) * cs > l.width || (r + 1) * cs > l.height) continue;
      (l.lesion_at(c, r) ? lesional : clean).emplace_back(c, r);
    }
  std::mt19937_64 rng(seed);
  std::shuffle(clean.begin(), clean.end(), rng);
  std::shuffle(lesional.begin(), lesional.end(), rng);
  clean.insert(clean.end(), lesional.begin(), lesional.end());

  std::int64_t remaining = std::llround(fraction * static_cast<double>(l.tissue_area()));
  std::int64_t planted = 0;
  std::uniform_int_distribution<int> kind(0, 3);
  for (const auto& [c, r] : clean) {
    if (remaining <= 0) break;
    const auto k = static_cast<ArtefactKind>(kind(rng));
    if (remaining >= cs * cs) {
      l.artefacts.push_back({k, c * cs, r * cs, cs, cs});
      remaining -= cs * cs;
      planted += cs * cs;
    } else {
      // Thin blur strips are indistinguishable from tissue at their edges.
      const auto strip_kind = k == ArtefactKind::Blur ? ArtefactKind::Fold : k;
      const std::int64_t strip = std::max<std::int64_t>(1, (remaining + cs / 2) / cs);
      l.artefacts.push_back({strip_kind, c * cs, r * cs, cs, strip});
      planted += cs * strip;
      remaining = 0;
    }
  }
  return planted;
}

}  // namespace wsimil::synth
