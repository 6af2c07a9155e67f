#include "wsimil/common/csv.hpp"

#include "wsimil/common/error.hpp"

namespace wsimil {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

CsvReader::CsvReader(std::istream& in) : in_(in) {
  std::string line;
  while (std::getline(in_, line)) {
    if (trim(line).empty()) continue;
    // Strip a UTF-8 byte order mark.
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    header_ = split_csv_line(line);
    break;
  }
  if (header_.empty()) throw DataError("CSV input has no header line");
  for (std::size_t i = 0; i < header_.size(); ++i) {
    header_[i] = trim(header_[i]);
    index_[header_[i]] = i;
  }
}

bool CsvReader::has_column(const std::string& name) const { return index_.count(name) > 0; }

bool CsvReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (trim(line).empty()) continue;
    fields_ = split_csv_line(line);
    ++row_;
    return true;
  }
  return false;
}

const std::string& CsvReader::get(const std::string& column) const {
  static const std::string empty;
  const auto it = index_.find(column);
  if (it == index_.end()) throw DataError("CSV has no column '" + column + "'");
  if (it->second >= fields_.size()) return empty;
  return fields_[it->second];
}

}  // namespace wsimil
