#include "wsimil/slide/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wsimil/common/csv.hpp"
#include "wsimil/common/error.hpp"

namespace wsimil::slide {

const SlideRecord* CohortManifest::find(std::string_view slide_id) const {
  for (const auto& r : records)
    if (r.slide_id == slide_id) return &r;
  return nullptr;
}

std::vector<std::string> CohortManifest::patients() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.patient_id).second) out.push_back(r.patient_id);
  return out;
}

std::optional<TaskLabel> derive_label(const SlideRecord& record, Task task) {
  switch (task) {
    case Task::Diagnosis:
      return TaskLabel{task, record.diagnosis == Diagnosis::UC ? 1 : 0};
    case Task::Macroscopic:
      // erosions/ulcers and inflammation together form the lesional class
      return TaskLabel{task, record.macroscopic == Macroscopic::Normal ? 0 : 1};
    case Task::SeverityCD:
      if (record.diagnosis != Diagnosis::CD) return std::nullopt;
      return TaskLabel{task, record.endoscopic_score > 0 ? 1 : 0};
    case Task::SeverityUC:
      if (record.diagnosis != Diagnosis::UC) return std::nullopt;
      return TaskLabel{task, record.endoscopic_score > 0 ? 1 : 0};
  }
  return std::nullopt;
}

std::string_view to_string(Diagnosis d) { return d == Diagnosis::CD ? "CD" : "UC"; }

std::string_view to_string(Macroscopic m) {
  switch (m) {
    case Macroscopic::Normal: return "normal";
    case Macroscopic::ErosionsUlcers: return "erosions_ulcers";
    case Macroscopic::Inflammation: return "inflammation";
  }
  return "normal";
}

std::string_view to_string(BiopsyLocation l) {
  switch (l) {
    case BiopsyLocation::Ileum: return "ileum";
    case BiopsyLocation::Colon: return "colon";
    case BiopsyLocation::Rectum: return "rectum";
    case BiopsyLocation::Other: return "other";
  }
  return "other";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Diagnosis: return "diagnosis";
    case Task::Macroscopic: return "macroscopic";
    case Task::SeverityCD: return "severity_cd";
    case Task::SeverityUC: return "severity_uc";
  }
  return "diagnosis";
}

Diagnosis parse_diagnosis(std::string_view s) {
  if (s == "CD") return Diagnosis::CD;
  if (s == "UC") return Diagnosis::UC;
  throw DataError("invalid diagnosis '" + std::string(s) + "' (expected CD or UC)");
}

Macroscopic parse_macroscopic(std::string_view s) {
  if (s == "normal") return Macroscopic::Normal;
  if (s == "erosions_ulcers") return Macroscopic::ErosionsUlcers;
  if (s == "inflammation") return Macroscopic::Inflammation;
  throw DataError("invalid macroscopic '" + std::string(s) + "'");
}

BiopsyLocation parse_location(std::string_view s) {
  if (s == "ileum") return BiopsyLocation::Ileum;
  if (s == "colon") return BiopsyLocation::Colon;
  if (s == "rectum") return BiopsyLocation::Rectum;
  if (s == "other") return BiopsyLocation::Other;
  throw DataError("invalid biopsy_location '" + std::string(s) + "'");
}

Task parse_task(std::string_view s) {
  if (s == "diagnosis") return Task::Diagnosis;
  if (s == "macroscopic") return Task::Macroscopic;
  if (s == "severity_cd") return Task::SeverityCD;
  if (s == "severity_uc") return Task::SeverityUC;
  throw DataError("unknown task '" + std::string(s) +
                  "' (expected diagnosis, macroscopic, severity_cd or severity_uc)");
}

namespace {

const char* const kColumns[] = {"slide_id",         "patient_id",        "diagnosis",
                                "macroscopic",      "biopsy_location",   "endoscopic_score",
                                "microns_per_pixel", "image_path"};

int parse_score(const std::string& text) {
  const std::string t = trim(text);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw DataError("unparseable endoscopic_score '" + t + "'");
  if (value < 0) throw DataError("negative endoscopic_score");
  if (value > 1000) throw DataError("implausible endoscopic_score '" + t + "'");
  return static_cast<int>(value);
}

double parse_mpp(const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(t, &used);
  } catch (const std::exception&) {
    throw DataError("unparseable microns_per_pixel '" + t + "'");
  }
  if (used != t.size()) throw DataError("unparseable microns_per_pixel '" + t + "'");
  if (!(value > 0.0)) throw DataError("microns_per_pixel must be positive");
  return value;
}

}  // namespace

CohortManifest parse_manifest(std::istream& in) {
  CsvReader csv(in);
  std::vector<std::string> missing;
  for (const char* col : kColumns)
    if (!csv.has_column(col)) missing.emplace_back(col);
  if (!missing.empty()) {
    std::string msg = "manifest is missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  CohortManifest manifest;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> first_row;
  while (csv.next()) {
    const std::size_t row = csv.row_number();
    try {
      SlideRecord r;
      r.slide_id = trim(csv.get("slide_id"));
      r.patient_id = trim(csv.get("patient_id"));
      if (r.slide_id.empty()) throw DataError("empty slide_id");
      if (r.patient_id.empty()) throw DataError("empty patient_id");
      r.diagnosis = parse_diagnosis(trim(csv.get("diagnosis")));
      r.macroscopic = parse_macroscopic(trim(csv.get("macroscopic")));
      r.location = parse_location(trim(csv.get("biopsy_location")));
      r.endoscopic_score = parse_score(csv.get("endoscopic_score"));
      r.microns_per_pixel = parse_mpp(csv.get("microns_per_pixel"));
      r.image_path = trim(csv.get("image_path"));
      const auto [it, inserted] = first_row.emplace(r.slide_id, row);
      if (!inserted) {
        errors.push_back("rows " + std::to_string(it->second) + " and " + std::to_string(row) +
                         ": duplicate slide_id '" + r.slide_id + "'");
        continue;
      }
      manifest.records.push_back(std::move(r));
    } catch (const DataError& e) {
      errors.push_back("row " + std::to_string(row) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "manifest parse failed:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  return manifest;
}

CohortManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_manifest(std::ostream& out, const CohortManifest& manifest) {
  out << kManifestHeader << '\n';
  std::ostringstream mpp;
  for (const auto& r : manifest.records) {
    mpp.str("");
    mpp << r.microns_per_pixel;
    out << csv_field(r.slide_id) << ',' << csv_field(r.patient_id) << ',' << to_string(r.diagnosis)
        << ',' << to_string(r.macroscopic) << ',' << to_string(r.location) << ','
        << r.endoscopic_score << ',' << mpp.str() << ',' << csv_field(r.image_path) << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, const CohortManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  write_manifest(out, manifest);
}

std::vector<std::string> diagnosis_consistency_warnings(const CohortManifest& manifest) {
  std::map<std::string, std::set<Diagnosis>> by_patient;
  for (const auto& r : manifest.records) by_patient[r.patient_id].insert(r.diagnosis);
  std::vector<std::string> warnings;
  for (const auto& [patient, diags] : by_patient)
    if (diags.size() > 1)
      warnings.push_back("patient '" + patient + "' has slides with both CD and UC diagnoses");
  return warnings;
}

ManifestFilter parse_filter(std::string_view expr) {
  const auto eq = expr.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == expr.size())
    throw DataError("filter must look like key=value, got '" + std::string(expr) + "'");
  ManifestFilter f{std::string(expr.substr(0, eq)), std::string(expr.substr(eq + 1))};
  if (f.key == "biopsy_location") f.key = "location";
  if (f.key == "diagnosis") {
    parse_diagnosis(f.value);
  } else if (f.key == "macroscopic") {
    if (f.value != "lesional") parse_macroscopic(f.value);
  } else if (f.key == "location") {
    parse_location(f.value);
  } else if (f.key != "patient_id") {
    throw DataError("unknown filter key '" + f.key +
                    "' (expected diagnosis, macroscopic, location or patient_id)");
  }
  return f;
}

namespace {

bool matches(const SlideRecord& r, const ManifestFilter& f) {
  if (f.key == "diagnosis") return to_string(r.diagnosis) == f.value;
  if (f.key == "macroscopic") {
    if (f.value == "lesional") return r.macroscopic != Macroscopic::Normal;
    return to_string(r.macroscopic) == f.value;
  }
  if (f.key == "location") return to_string(r.location) == f.value;
  if (f.key == "patient_id") return r.patient_id == f.value;
  return false;
}

}  // namespace

CohortManifest apply_filters(const CohortManifest& manifest,
                             const std::vector<ManifestFilter>& filters) {
  std::map<std::string, std::vector<const ManifestFilter*>> by_key;
  for (const auto& f : filters) by_key[f.key].push_back(&f);
  CohortManifest out;
  out.schema_version = manifest.schema_version;
  for (const auto& r : manifest.records) {
    bool keep = true;
    for (const auto& [key, alternatives] : by_key) {
      keep = std::any_of(alternatives.begin(), alternatives.end(),
                         [&](const ManifestFilter* f) { return matches(r, *f); });
      if (!keep) break;
    }
    if (keep) out.records.push_back(r);
  }
  return out;
}

}  // namespace wsimil::slide
