#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsimil/embed/bag.hpp"
#include "wsimil/qc/patch_qc.hpp"
#include "wsimil/slide/cohort.hpp"

namespace wsimil::cli {

namespace fs = std::filesystem;

/// `value` when set, otherwise `fallback`.
fs::path or_default(const fs::path& value, const fs::path& fallback);

nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);
void write_text_file(const fs::path& path, const std::string& text);

/// run.json: command name, tool version and the fully resolved options.
void write_run_json(const fs::path& dir, const std::string& command, const nlohmann::json& options);

slide::CohortManifest load_filtered_manifest(const fs::path& path, const std::vector<std::string>& filters);

/// image_path of a record; relative paths resolve against the manifest's directory.
fs::path resolve_image(const fs::path& manifest_path, const slide::SlideRecord& record);

/// QC summaries found in work/qc, keyed by slide id.
std::map<std::string, qc::QcSummary> load_qc_summaries(const fs::path& work);

/// Loads bags for every record in order. Missing files raise
/// "missing embedding bags ... run `embed`".
std::vector<embed::EmbeddingBag> load_bags(const fs::path& dir, const std::vector<slide::SlideRecord>& records);

/// Grid dimensions of a slide at tile size `tile`: from the tile list when
/// present, else from the slide image, else the bag extent.
struct GridDims {
  int cols = 0;
  int rows = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
};
GridDims slide_grid(const fs::path& work, const fs::path& manifest_path, const slide::SlideRecord& record,
                    int tile, const embed::EmbeddingBag* bag);

/// A compact, file-name-safe tag for a filter list ("diagnosis-UC").
std::string filter_tag(const std::vector<std::string>& filters);

/// Fixed-precision formatting for byte-stable text outputs.
std::string num(double v, int precision = 6);

}  // namespace wsimil::cli
