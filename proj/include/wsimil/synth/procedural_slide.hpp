#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsimil/qc/image.hpp"
#include "wsimil/qc/slide_source.hpp"

namespace wsimil::synth {

enum class ArtefactKind { Black, Fold, PenGreen, Blur };

const char* to_string(ArtefactKind k);
ArtefactKind parse_artefact_kind(const std::string& s);

/// Axis-aligned artefact block in base pixels.
struct ArtefactRect {
  ArtefactKind kind = ArtefactKind::Black;
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  bool contains(std::int64_t px, std::int64_t py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
};

/// Description of a procedural slide. Tissue and lesion are defined on a
/// coarse grid of cell_size-pixel squares; artefacts are free rectangles that
/// lie inside tissue.
struct SlideLayout {
  std::string slide_id;
  std::int64_t width = 0;
  std::int64_t height = 0;
  int cell_size = 224;
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> tissue;  // cols x rows, row-major
  std::vector<std::uint8_t> lesion;
  std::vector<ArtefactRect> artefacts;
  bool nuclei = true;
  std::uint64_t seed = 0;

  /// Sizes the grids for the given dimensions with everything cleared.
  static SlideLayout blank(std::string slide_id, std::int64_t width, std::int64_t height,
                           int cell_size, std::uint64_t seed);

  bool tissue_at(int c, int r) const { return tissue[static_cast<std::size_t>(r) * cols + c] != 0; }
  bool lesion_at(int c, int r) const { return lesion[static_cast<std::size_t>(r) * cols + c] != 0; }
  void set_tissue(int c, int r, bool v) { tissue[static_cast<std::size_t>(r) * cols + c] = v; }
  void set_lesion(int c, int r, bool v) { lesion[static_cast<std::size_t>(r) * cols + c] = v; }

  /// Tissue area in base pixels (cells clipped to the slide).
  std::int64_t tissue_area() const;
  std::int64_t artefact_area() const;
  void fill_tissue_rect(int c0, int r0, int c1, int r1);  // half-open
};

SlideLayout load_slide_layout(const std::filesystem::path& path);
void save_slide_layout(const std::filesystem::path& path, const SlideLayout& layout);

/// Renders a layout on demand; nothing larger than the requested region is
/// ever materialised. Downsampled reads point-sample.
class ProceduralSlide : public qc::SlideSource {
 public:
  explicit ProceduralSlide(SlideLayout layout);

  std::int64_t width() const override { return layout_.width; }
  std::int64_t height() const override { return layout_.height; }
  void read_region(std::int64_t x, std::int64_t y, int w, int h, int downsample,
                   qc::RgbImage& out) const override;

  const SlideLayout& layout() const { return layout_; }

 private:
  void render_pixel(std::int64_t x, std::int64_t y, std::uint8_t* rgb) const;

  SlideLayout layout_;
  std::vector<std::vector<std::uint32_t>> cell_artefacts_;  // artefact indices touching each cell
};

/// Planted three-class labels for a region, sampled like read_region.
qc::ClassMap ground_truth_classes(const SlideLayout& layout, std::int64_t x, std::int64_t y, int w,
                                  int h, int downsample = 1);

/// Covers `fraction` of the tissue area with artefacts, avoiding lesion cells
/// where possible: whole cells first, then a partial strip for the remainder.
/// Returns the planted area in base pixels.
std::int64_t plant_artefacts(SlideLayout& layout, double fraction, std::uint64_t seed);

}  // namespace wsimil::synth
