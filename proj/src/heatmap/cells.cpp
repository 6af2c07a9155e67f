#include "wsimil/heatmap/cells.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "wsimil/common/csv.hpp"
#include "wsimil/common/error.hpp"

namespace wsimil::heatmap {

namespace {
constexpr std::array<std::string_view, kCellClasses> kClassNames = {"epithelial", "neutrophil", "lymphocyte",
                                                                    "plasma",     "connective", "eosinophil"};
}

std::string_view to_string(CellClass c) { return kClassNames[static_cast<int>(c)]; }

CellClass parse_cell_class(std::string_view s) {
  for (int i = 0; i < kCellClasses; ++i)
    if (kClassNames[i] == s) return static_cast<CellClass>(i);
  throw DataError("unknown cell class '" + std::string(s) + "'");
}

std::vector<CellRecord> read_cells(std::istream& in) {
  CsvReader reader(in);
  for (const char* col : {"slide_id", "x", "y", "cell_class"})
    if (!reader.has_column(col)) throw DataError(std::string("cells table is missing column '") + col + "'");
  std::vector<CellRecord> cells;
  std::vector<std::string> errors;
  while (reader.next()) {
    try {
      CellRecord c;
      c.slide_id = reader.get("slide_id");
      if (c.slide_id.empty()) throw DataError("empty slide_id");
      auto num = [&](const char* col) {
        const std::string s = reader.get(col);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
          throw DataError(std::string("bad ") + col + " '" + s + "'");
        return v;
      };
      c.x = num("x");
      c.y = num("y");
      c.cell_class = parse_cell_class(reader.get("cell_class"));
      cells.push_back(std::move(c));
    } catch (const DataError& e) {
      errors.push_back("row " + std::to_string(reader.row_number()) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid cells table:";
    for (std::size_t i = 0; i < std::min<std::size_t>(errors.size(), 20); ++i) msg += "\n  " + errors[i];
    if (errors.size() > 20) msg += "\n  ... " + std::to_string(errors.size() - 20) + " more";
    throw DataError(msg);
  }
  return cells;
}

std::vector<CellRecord> load_cells(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cells table " + path.string());
  try {
    return read_cells(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_cells(std::ostream& out, std::span<const CellRecord> cells) {
  out << kCellsHeader << '\n';
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f", c.x, c.y);
    out << c.slide_id << ',' << buf << ',' << to_string(c.cell_class) << '\n';
  }
}

void save_cells(const std::filesystem::path& path, std::span<const CellRecord> cells) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_cells(out, cells);
}

CellHeatmap cell_density_heatmap(std::span<const CellRecord> cells, const qc::TileGrid& grid, CellClass cell_class,
                                 double microns_per_pixel) {
  CellHeatmap map;
  map.cols = grid.cols();
  map.rows = grid.rows();
  map.counts.assign(static_cast<std::size_t>(map.cols) * map.rows, 0);
  const double fp = static_cast<double>(grid.footprint());
  for (const auto& c : cells) {
    if (!(c.x >= 0 && c.y >= 0 && c.x < static_cast<double>(grid.slide_width) &&
          c.y < static_cast<double>(grid.slide_height))) {
      ++map.skipped;
      continue;
    }
    if (c.cell_class != cell_class) continue;
    const auto col = static_cast<int>(std::floor(c.x / fp));
    const auto row = static_cast<int>(std::floor(c.y / fp));
    if (col >= map.cols || row >= map.rows) continue;  // partial edge strip, not part of the grid
    ++map.counts[static_cast<std::size_t>(row) * map.cols + col];
  }
  const double tile_mm2 = std::pow(fp * microns_per_pixel / 1000.0, 2);
  map.densities.resize(map.counts.size());
  for (std::size_t i = 0; i < map.counts.size(); ++i) map.densities[i] = map.counts[i] / tile_mm2;
  return map;
}

SlideHif compute_hifs(const std::string& slide_id, std::span<const CellRecord> cells, double accepted_pixels,
                      double microns_per_pixel) {
  SlideHif h;
  h.slide_id = slide_id;
  for (const auto& c : cells) ++h.counts[static_cast<int>(c.cell_class)];
  h.total = std::accumulate(h.counts.begin(), h.counts.end(), 0);
  const double px_mm = microns_per_pixel / 1000.0;
  h.accepted_area_mm2 = accepted_pixels * px_mm * px_mm;
  if (h.total > 0) {
    std::array<double, kCellClasses> r{};
    for (int k = 0; k < kCellClasses; ++k) r[k] = static_cast<double>(h.counts[k]) / h.total;
    h.ratios = r;
  }
  if (h.accepted_area_mm2 > 0) {
    for (int k = 0; k < kCellClasses; ++k) h.densities[k] = h.counts[k] / h.accepted_area_mm2;
    h.total_density = h.total / h.accepted_area_mm2;
  }
  return h;
}

std::vector<std::string> hif_feature_names() {
  std::vector<std::string> names;
  for (auto n : kClassNames) names.push_back(std::string(n) + "_ratio");
  for (auto n : kClassNames) names.push_back(std::string(n) + "_density");
  names.push_back("total_density");
  return names;
}

std::optional<double> hif_feature(const SlideHif& hif, const std::string& name) {
  if (name == "total_density") return hif.total_density;
  for (int k = 0; k < kCellClasses; ++k) {
    const std::string base(kClassNames[k]);
    if (name == base + "_ratio") {
      if (!hif.ratios) return std::nullopt;
      return (*hif.ratios)[k];
    }
    if (name == base + "_density") return hif.densities[k];
  }
  throw DataError("unknown HIF '" + name + "'");
}

MannWhitney hif_group_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("Mann-Whitney test needs two non-empty groups");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  std::vector<double> rank(n);
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) rank[order[t]] = mid;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double ra = std::accumulate(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  MannWhitney r;
  r.n_a = static_cast<int>(na);
  r.n_b = static_cast<int>(nb);
  r.u = ra - static_cast<double>(na * (na + 1)) / 2.0;
  const double mu = static_cast<double>(na * nb) / 2.0;
  const double observed = std::abs(r.u - mu);

  if (n <= 16) {
    r.exact = true;
    // Every choice of na positions for group A, as a combination of indices.
    std::vector<std::size_t> pick(na);
    std::iota(pick.begin(), pick.end(), 0);
    std::size_t extreme = 0, total = 0;
    const double base = static_cast<double>(na * (na + 1)) / 2.0;
    for (;;) {
      double s = 0.0;
      for (std::size_t i : pick) s += rank[i];
      ++total;
      if (std::abs(s - base - mu) >= observed - 1e-9) ++extreme;
      std::size_t i = na;
      while (i > 0 && pick[i - 1] == n - na + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < na; ++j) pick[j] = pick[j - 1] + 1;
    }
    r.p = static_cast<double>(extreme) / static_cast<double>(total);
    return r;
  }

  const double dn = static_cast<double>(n);
  const double var = static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (!(var > 0.0)) {
    r.p = 1.0;
    return r;
  }
  const double z = std::max(0.0, observed - 0.5) / std::sqrt(var);
  const boost::math::normal_distribution<double> normal;
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, z)));
  return r;
}

}  // namespace wsimil::heatmap
