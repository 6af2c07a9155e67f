#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wsimil {

/// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

/// Header-indexed CSV reader. Column order in the file is free.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  bool has_column(const std::string& name) const;
  const std::vector<std::string>& header() const { return header_; }

  /// Reads the next non-empty row. Returns false at end of input.
  bool next();
  /// 1-based data row number (header excluded) of the current row.
  std::size_t row_number() const { return row_; }
  const std::string& get(const std::string& column) const;

 private:
  std::istream& in_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> fields_;
  std::size_t row_ = 0;
};

std::string trim(const std::string& s);

}  // namespace wsimil
