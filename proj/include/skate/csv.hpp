#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace skate {

// Minimal CSV writer: header once, numeric rows at full precision.
class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const std::string& path, const std::vector<std::string>& columns) { open(path, columns); }

  void open(const std::string& path, const std::vector<std::string>& columns) {
    out_.open(path);
    for (size_t i = 0; i < columns.size(); ++i) {
      if (i) out_ << ",";
      out_ << columns[i];
    }
    out_ << "\n";
  }

  void row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ",";
      out_ << std::setprecision(17) << values[i];
    }
    out_ << "\n";
  }

  void flush() { out_.flush(); }
  bool is_open() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

}  // namespace skate
