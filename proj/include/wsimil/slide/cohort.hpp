#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wsimil::slide {

enum class Diagnosis { CD, UC };
enum class Macroscopic { Normal, ErosionsUlcers, Inflammation };
enum class BiopsyLocation { Ileum, Colon, Rectum, Other };

/// The binary endoscopic prediction tasks.
enum class Task { Diagnosis, Macroscopic, SeverityCD, SeverityUC };

struct SlideRecord {
  std::string slide_id;
  std::string patient_id;
  Diagnosis diagnosis = Diagnosis::CD;
  Macroscopic macroscopic = Macroscopic::Normal;
  BiopsyLocation location = BiopsyLocation::Other;
  /// SES-CD when diagnosis is CD, modified Mayo when UC.
  int endoscopic_score = 0;
  double microns_per_pixel = 0.5;
  std::string image_path;
};

struct CohortManifest {
  static constexpr int kSchemaVersion = 1;

  std::vector<SlideRecord> records;
  int schema_version = kSchemaVersion;

  const SlideRecord* find(std::string_view slide_id) const;
  /// Distinct patient ids in first-appearance order.
  std::vector<std::string> patients() const;
};

struct TaskLabel {
  Task task;
  int label;  // 0 or 1
};

/// Binarised label for `task`, or nullopt when the record does not take part
/// in the task (severity tasks are diagnosis specific).
std::optional<TaskLabel> derive_label(const SlideRecord& record, Task task);

std::string_view to_string(Diagnosis d);
std::string_view to_string(Macroscopic m);
std::string_view to_string(BiopsyLocation l);
std::string_view to_string(Task t);

Diagnosis parse_diagnosis(std::string_view s);
Macroscopic parse_macroscopic(std::string_view s);
BiopsyLocation parse_location(std::string_view s);
/// Accepts "diagnosis", "macroscopic", "severity_cd", "severity_uc".
Task parse_task(std::string_view s);

inline constexpr const char* kManifestHeader =
    "slide_id,patient_id,diagnosis,macroscopic,biopsy_location,endoscopic_score,"
    "microns_per_pixel,image_path";

/// Parses a manifest. All rows are checked; on any problem a DataError lists
/// every offending row ("row N: ...").
CohortManifest parse_manifest(std::istream& in);
CohortManifest load_manifest(const std::filesystem::path& path);

void write_manifest(std::ostream& out, const CohortManifest& manifest);
void save_manifest(const std::filesystem::path& path, const CohortManifest& manifest);

/// Patients whose slides disagree on diagnosis. Reported as warnings only.
std::vector<std::string> diagnosis_consistency_warnings(const CohortManifest& manifest);

/// A `key=value` restriction. Keys: diagnosis, macroscopic, location
/// (alias biopsy_location), patient_id. Values of one key are OR-ed, different
/// keys AND-ed.
struct ManifestFilter {
  std::string key;
  std::string value;
};

ManifestFilter parse_filter(std::string_view expr);
CohortManifest apply_filters(const CohortManifest& manifest,
                             const std::vector<ManifestFilter>& filters);

}  // namespace wsimil::slide
