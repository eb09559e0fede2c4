#include "gae/csv.hpp"

#include "gae/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gae {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0'))
    throw IngestError(path + ":" + std::to_string(line_no) + ": cannot parse '" + cell +
                      "' as a number");
  return v;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path);

  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (line_no == 1) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw IngestError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " columns, got " +
                        std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) row[i] = parse_cell(cells[i], path, line_no);
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw IngestError(path + ": missing header line");

  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return table;
}

Mat read_csv(const std::string& path, const std::vector<std::string>& header) {
  CsvTable table = read_csv(path);
  if (table.header != header) {
    std::string want, got;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
    throw IngestError(path + ": expected header '" + want + "', got '" + got + "'");
  }
  return std::move(table.values);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& values) {
  if (values.size() > 0 && values.cols() != static_cast<Index>(header.size()))
    throw UsageError("csv header has " + std::to_string(header.size()) +
                     " names for " + std::to_string(values.cols()) + " columns");
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_g17(values(r, c));
    out << '\n';
  }
  if (!out) throw IngestError("failed while writing " + path);
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace gae
