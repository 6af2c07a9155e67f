#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsimil/qc/tiling.hpp"

namespace wsimil::heatmap {

enum class CellClass { Epithelial, Neutrophil, Lymphocyte, Plasma, Connective, Eosinophil };
inline constexpr int kCellClasses = 6;

std::string_view to_string(CellClass c);
CellClass parse_cell_class(std::string_view s);

struct CellRecord {
  std::string slide_id;
  double x = 0.0;  // base pixels
  double y = 0.0;
  CellClass cell_class = CellClass::Epithelial;
};

inline constexpr const char* kCellsHeader = "slide_id,x,y,cell_class";

/// Reads cells.csv; every malformed row is reported in one DataError.
std::vector<CellRecord> read_cells(std::istream& in);
std::vector<CellRecord> load_cells(const std::filesystem::path& path);
void write_cells(std::ostream& out, std::span<const CellRecord> cells);
void save_cells(const std::filesystem::path& path, std::span<const CellRecord> cells);

struct CellHeatmap {
  int cols = 0;
  int rows = 0;
  std::vector<int> counts;
  std::vector<double> densities;  // cells per mm^2 of tile area
  std::size_t skipped = 0;        // centroids outside the slide
};

/// Counts `cell_class` per grid cell of `grid` (every grid position, not only
/// extracted tiles). Tile intervals are half-open, so a centroid on a boundary
/// belongs to the tile starting there.
CellHeatmap cell_density_heatmap(std::span<const CellRecord> cells, const qc::TileGrid& grid, CellClass cell_class,
                                 double microns_per_pixel);

/// Per-slide human-interpretable features.
struct SlideHif {
  std::string slide_id;
  std::array<int, kCellClasses> counts{};
  int total = 0;
  double accepted_area_mm2 = 0.0;
  /// Absent when the slide has no cells.
  std::optional<std::array<double, kCellClasses>> ratios;
  std::array<double, kCellClasses> densities{};
  double total_density = 0.0;
};

/// Ratios over all cells and densities per mm^2 of accepted tissue.
SlideHif compute_hifs(const std::string& slide_id, std::span<const CellRecord> cells, double accepted_pixels,
                      double microns_per_pixel);

/// Names of the per-slide features: "<class>_ratio", "<class>_density", "total_density".
std::vector<std::string> hif_feature_names();
/// Feature value by name; nullopt for a ratio of an empty slide.
std::optional<double> hif_feature(const SlideHif& hif, const std::string& name);

struct MannWhitney {
  double u = 0.0;  // U of group A
  double p = 1.0;  // two-tailed
  int n_a = 0;
  int n_b = 0;
  bool exact = false;
};

/// Mann-Whitney U with midranks. Exact p (enumerating every split of the
/// pooled midranks) when n_a + n_b <= 16, otherwise the normal approximation
/// with tie and continuity corrections.
MannWhitney hif_group_test(std::span<const double> a, std::span<const double> b);

}  // namespace wsimil::heatmap
