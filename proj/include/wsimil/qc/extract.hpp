#pragma once

#include <string>
#include <vector>

#include "wsimil/common/parallel.hpp"
#include "wsimil/qc/patch_qc.hpp"
#include "wsimil/qc/slide_source.hpp"
#include "wsimil/qc/tiling.hpp"
#include "wsimil/qc/tissue.hpp"

namespace wsimil::qc {

/// Streams every planned tile through `fn(index, coord, pixels, worker)`.
/// Each worker reuses one tile buffer, so resident pixel memory is
/// tile_size^2 x 3 bytes x workers regardless of slide size.
template <typename Fn>
void for_each_tile(const SlideSource& source, const TileGrid& grid, int workers, Fn&& fn) {
  const int count = std::max(1, workers);
  std::vector<RgbImage> buffers(static_cast<std::size_t>(count));
  parallel_for(grid.tiles.size(), count, [&](std::size_t i, int worker) {
    const TileCoord& t = grid.tiles[i];
    RgbImage& buf = buffers[static_cast<std::size_t>(worker)];
    source.read_region(grid.origin_x(t), grid.origin_y(t), grid.tile_size, grid.tile_size,
                       grid.level_downsample, buf);
    fn(i, t, static_cast<const RgbImage&>(buf), worker);
  });
}

/// Smallest power of two bringing the longer slide side to <= max_side.
int auto_thumbnail_downsample(std::int64_t width, std::int64_t height, int max_side = 2048);

struct ExtractionParams {
  int tile_size = 224;
  int level_downsample = 1;
  int thumbnail_downsample = 0;  // 0: auto
  TissueParams tissue;
  QcParams qc;
  int workers = 1;
};

struct SlideQcRun {
  TissueMask mask;
  TileGrid grid;
  std::vector<QcPatchResult> patches;  // aligned with grid.tiles
  QcSummary summary;
  std::vector<std::string> warnings;
};

/// Thumbnail tissue detection, tile planning and per-tile QC for one slide.
SlideQcRun run_slide_qc(const SlideSource& source, const std::string& slide_id,
                        const ExtractionParams& params);

}  // namespace wsimil::qc
