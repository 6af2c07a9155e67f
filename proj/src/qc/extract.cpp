#include "wsimil/qc/extract.hpp"

namespace wsimil::qc {

int auto_thumbnail_downsample(std::int64_t width, std::int64_t height, int max_side) {
  int ds = 1;
  while (std::max(width, height) / ds > max_side) ds *= 2;
  return ds;
}

SlideQcRun run_slide_qc(const SlideSource& source, const std::string& slide_id,
                        const ExtractionParams& params) {
  SlideQcRun run;
  TissueParams tissue = params.tissue;
  tissue.downsample = params.thumbnail_downsample > 0
                          ? params.thumbnail_downsample
                          : auto_thumbnail_downsample(source.width(), source.height());
  run.mask = detect_tissue(source.thumbnail(tissue.downsample), tissue);
  run.grid = plan_tiles(source.width(), source.height(), params.tile_size, run.mask,
                        params.level_downsample, &run.warnings);
  run.patches.resize(run.grid.tiles.size());
  QcParams qc = params.qc;
  for_each_tile(source, run.grid, params.workers,
                [&](std::size_t i, const TileCoord&, const RgbImage& tile, int) {
                  run.patches[i] = qc_score_patch(tile, qc, params.level_downsample);
                });
  run.summary = slide_qc_summary(run.patches, slide_id);
  return run;
}

}  // namespace wsimil::qc
