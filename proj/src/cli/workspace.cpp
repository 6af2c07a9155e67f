#include "wsimil/cli/workspace.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <fmt/format.h>

#include "wsimil/cli/commands.hpp"
#include "wsimil/common/error.hpp"
#include "wsimil/qc/qc_io.hpp"
#include "wsimil/qc/slide_source.hpp"

namespace wsimil::cli {

fs::path or_default(const fs::path& value, const fs::path& fallback) { return value.empty() ? fallback : value; }

nlohmann::json read_json_file(const fs::path& path) {
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

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_run_json(const fs::path& dir, const std::string& command, const nlohmann::json& options) {
  write_json_file(dir / "run.json", {{"command", command}, {"version", kToolVersion}, {"options", options}});
}

slide::CohortManifest load_filtered_manifest(const fs::path& path, const std::vector<std::string>& filters) {
  auto manifest = slide::load_manifest(path);
  if (filters.empty()) return manifest;
  std::vector<slide::ManifestFilter> parsed;
  for (const auto& f : filters) parsed.push_back(slide::parse_filter(f));
  auto filtered = slide::apply_filters(manifest, parsed);
  if (filtered.records.empty()) throw DataError("filters leave no slides in " + path.string());
  return filtered;
}

fs::path resolve_image(const fs::path& manifest_path, const slide::SlideRecord& record) {
  const fs::path p(record.image_path);
  if (p.empty()) throw DataError("slide " + record.slide_id + " has no image_path");
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

std::map<std::string, qc::QcSummary> load_qc_summaries(const fs::path& work) {
  std::map<std::string, qc::QcSummary> out;
  const fs::path dir = work / "qc";
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json" && e.path().filename() != "run.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto s = qc::read_qc_summary(f);
    out[s.slide_id] = s;
  }
  return out;
}

std::vector<embed::EmbeddingBag> load_bags(const fs::path& dir, const std::vector<slide::SlideRecord>& records) {
  std::vector<std::string> missing;
  for (const auto& r : records)
    if (!fs::exists(embed::bag_path(dir, r.slide_id))) missing.push_back(r.slide_id);
  if (!missing.empty())
    throw DataError(fmt::format("missing embedding bags for {} of {} slides in {} (first: {}); run `embed` first",
                                missing.size(), records.size(), dir.string(), missing.front()));
  std::vector<embed::EmbeddingBag> bags;
  bags.reserve(records.size());
  for (const auto& r : records) bags.push_back(embed::read_bag(embed::bag_path(dir, r.slide_id)));
  return bags;
}

GridDims slide_grid(const fs::path& work, const fs::path& manifest_path, const slide::SlideRecord& record, int tile,
                    const embed::EmbeddingBag* bag) {
  GridDims g;
  const fs::path tiles = work / "tiles" / (record.slide_id + ".json");
  if (fs::exists(tiles)) {
    const auto list = qc::read_tile_list(tiles);
    g.width = list.width;
    g.height = list.height;
  } else {
    try {
      const auto source = qc::open_slide(resolve_image(manifest_path, record));
      g.width = source->width();
      g.height = source->height();
    } catch (const Error&) {
      if (!bag) throw;
      std::uint32_t mc = 0, mr = 0;
      for (const auto& c : bag->coords) {
        mc = std::max(mc, c.col + 1);
        mr = std::max(mr, c.row + 1);
      }
      g.width = std::int64_t{mc} * tile * (bag ? bag->level_downsample : 1);
      g.height = std::int64_t{mr} * tile * (bag ? bag->level_downsample : 1);
    }
  }
  const std::int64_t fp = std::int64_t{tile} * (bag ? bag->level_downsample : 1);
  g.cols = static_cast<int>(g.width / fp);
  g.rows = static_cast<int>(g.height / fp);
  return g;
}

std::string filter_tag(const std::vector<std::string>& filters) {
  std::string tag;
  for (const auto& f : filters) {
    if (!tag.empty()) tag += "_";
    for (char ch : f) tag += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '-';
  }
  return tag;
}

std::string num(double v, int precision) { return fmt::format("{:.{}f}", v, precision); }

}  // namespace wsimil::cli
