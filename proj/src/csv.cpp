#include "geoxray/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace geoxray {

std::string CsvWriter::format(double v) {
  char buf[40];
  // %.17g round-trips doubles exactly; normalize the one ambiguous case.
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_.size())
    throw std::invalid_argument("csv: row width does not match header");
  std::string line;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    line += format(values[i]);
  }
  rows_.push_back(std::move(line));
}

void CsvWriter::raw_row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_.size())
    throw std::invalid_argument("csv: row width does not match header");
  std::string line;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  rows_.push_back(std::move(line));
}

std::string CsvWriter::body() const {
  std::string out;
  for (size_t i = 0; i < columns_.size(); ++i) {
    if (i) out += ',';
    out += columns_[i];
  }
  out += '\n';
  for (const auto& r : rows_) {
    out += r;
    out += '\n';
  }
  return out;
}

void CsvWriter::write(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open " + path);
  f << body();
}

}  // namespace geoxray
