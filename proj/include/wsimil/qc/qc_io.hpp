#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/qc/extract.hpp"

namespace wsimil::qc {

nlohmann::json summary_to_json(const QcSummary& s);
QcSummary summary_from_json(const nlohmann::json& j);

/// qc/<slide>.json: summary plus per-tile fractions.
void write_qc_report(const std::filesystem::path& path, const SlideQcRun& run);
QcSummary read_qc_summary(const std::filesystem::path& path);

/// Tiles kept for embedding at one extraction level.
struct TileList {
  std::string slide_id;
  std::string image_path;
  std::int64_t width = 0;
  std::int64_t height = 0;
  int tile_size = 224;
  int level_downsample = 1;
  std::vector<TileCoord> tiles;

  TileGrid grid() const;
};

/// Tiles of `run` that pass patch_filter.
TileList kept_tiles(const SlideQcRun& run, const std::string& slide_id, const std::string& image_path);

void write_tile_list(const std::filesystem::path& path, const TileList& list);
TileList read_tile_list(const std::filesystem::path& path);

}  // namespace wsimil::qc
