#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace geoxray {

// Deterministic CSV writer: fixed shortest-roundtrip formatting, no locale,
// no timestamps, so identical runs produce byte-identical bodies.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  static std::string format(double v);

  void row(const std::vector<double>& values);
  void raw_row(const std::vector<std::string>& fields);

  std::string body() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> rows_;
};

}  // namespace geoxray
