#include "wsimil/qc/qc_io.hpp"

#include <fstream>

#include "wsimil/common/error.hpp"

namespace wsimil::qc {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

nlohmann::json summary_to_json(const QcSummary& s) {
  return {{"slide_id", s.slide_id},
          {"background", s.background},
          {"accepted", s.accepted},
          {"artefact", s.artefact},
          {"tissue_fraction_rejected", s.tissue_fraction_rejected},
          {"excluded", s.excluded},
          {"accepted_pixels", s.accepted_pixels},
          {"artefact_pixels", s.artefact_pixels},
          {"background_pixels", s.background_pixels},
          {"patches", s.patches},
          {"kept_patches", s.kept_patches}};
}

QcSummary summary_from_json(const nlohmann::json& j) {
  QcSummary s;
  s.slide_id = j.at("slide_id").get<std::string>();
  s.background = j.at("background").get<double>();
  s.accepted = j.at("accepted").get<double>();
  s.artefact = j.at("artefact").get<double>();
  s.tissue_fraction_rejected = j.at("tissue_fraction_rejected").get<double>();
  s.excluded = j.at("excluded").get<bool>();
  s.accepted_pixels = j.at("accepted_pixels").get<double>();
  s.artefact_pixels = j.at("artefact_pixels").get<double>();
  s.background_pixels = j.at("background_pixels").get<double>();
  s.patches = j.at("patches").get<std::size_t>();
  s.kept_patches = j.at("kept_patches").get<std::size_t>();
  return s;
}

void write_qc_report(const std::filesystem::path& path, const SlideQcRun& run) {
  nlohmann::json j;
  j["summary"] = summary_to_json(run.summary);
  j["tile_size"] = run.grid.tile_size;
  j["level_downsample"] = run.grid.level_downsample;
  j["tissue_mask_downsample"] = run.mask.downsample;
  j["warnings"] = run.warnings;
  auto& tiles = j["tiles"] = nlohmann::json::array();
  for (std::size_t i = 0; i < run.grid.tiles.size(); ++i) {
    const auto& t = run.grid.tiles[i];
    const auto& p = run.patches[i];
    tiles.push_back({t.col, t.row, p.background, p.accepted, p.artefact});
  }
  write_json(path, j);
}

QcSummary read_qc_summary(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    return summary_from_json(j.at("summary"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid QC report: " + e.what());
  }
}

TileGrid TileList::grid() const {
  TileGrid g;
  g.slide_width = width;
  g.slide_height = height;
  g.tile_size = tile_size;
  g.level_downsample = level_downsample;
  g.tiles = tiles;
  return g;
}

TileList kept_tiles(const SlideQcRun& run, const std::string& slide_id, const std::string& image_path) {
  TileList list;
  list.slide_id = slide_id;
  list.image_path = image_path;
  list.width = run.grid.slide_width;
  list.height = run.grid.slide_height;
  list.tile_size = run.grid.tile_size;
  list.level_downsample = run.grid.level_downsample;
  for (std::size_t i = 0; i < run.grid.tiles.size(); ++i)
    if (patch_filter(run.patches[i])) list.tiles.push_back(run.grid.tiles[i]);
  return list;
}

void write_tile_list(const std::filesystem::path& path, const TileList& list) {
  nlohmann::json j;
  j["slide_id"] = list.slide_id;
  j["image_path"] = list.image_path;
  j["width"] = list.width;
  j["height"] = list.height;
  j["tile_size"] = list.tile_size;
  j["level_downsample"] = list.level_downsample;
  auto& tiles = j["tiles"] = nlohmann::json::array();
  for (const auto& t : list.tiles) tiles.push_back({t.col, t.row});
  write_json(path, j);
}

TileList read_tile_list(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    TileList l;
    l.slide_id = j.at("slide_id").get<std::string>();
    l.image_path = j.at("image_path").get<std::string>();
    l.width = j.at("width").get<std::int64_t>();
    l.height = j.at("height").get<std::int64_t>();
    l.tile_size = j.at("tile_size").get<int>();
    l.level_downsample = j.at("level_downsample").get<int>();
    for (const auto& t : j.at("tiles")) l.tiles.push_back({t.at(0).get<std::uint32_t>(), t.at(1).get<std::uint32_t>()});
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid tile list: " + e.what());
  }
}

}  // namespace wsimil::qc
