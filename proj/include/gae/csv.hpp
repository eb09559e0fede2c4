#pragma once

#include "gae/tensor.hpp"

#include <string>
#include <vector>

namespace gae {

/// Numeric CSV with a single header line.
struct CsvTable {
  std::vector<std::string> header;
  Mat values;  // 0 x 0 when the file holds no data rows
};

CsvTable read_csv(const std::string& path);

/// Read and require the given header (column names must match exactly).
Mat read_csv(const std::string& path, const std::vector<std::string>& header);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& values);

/// Shortest decimal form that round-trips a double (%.17g).
std::string format_g17(double v);

}  // namespace gae
