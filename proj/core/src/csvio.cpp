#include "geomae/csvio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace geomae {

Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Index>(i);
  throw DataError("csv: missing column '" + name + "'");
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}
}  // namespace

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("csv: cannot open " + file.string());
  CsvTable table;
  std::string line;
  Index row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
    } else {
      if (cells.size() != table.header.size())
        throw DataError("csv: row " + std::to_string(row) + " of " + file.string() + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(table.header.size()));
      table.rows.push_back(std::move(cells));
    }
  }
  if (table.header.empty()) throw DataError("csv: " + file.string() + " has no header row");
  return table;
}

void write_csv(const std::filesystem::path& file, const CsvTable& table) {
  std::ofstream out(file);
  if (!out) throw DataError("csv: cannot write " + file.string());
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  if (!out) throw DataError("csv: write failed for " + file.string());
}

std::vector<std::string> split_list(const std::string& cell, char sep) {
  std::vector<std::string> out;
  if (cell.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = cell.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(cell.substr(start));
      break;
    }
    out.push_back(cell.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& cell, const std::string& context) {
  double x = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(cell.data(), end, x);
  if (ec != std::errc{} || p != end)
    throw DataError("csv: bad number '" + cell + "' in " + context);
  return x;
}

long long parse_int(const std::string& cell, const std::string& context) {
  long long x = 0;
  const auto* end = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(cell.data(), end, x);
  if (ec != std::errc{} || p != end)
    throw DataError("csv: bad integer '" + cell + "' in " + context);
  return x;
}

std::string format_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  // trim to the shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[48];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, x);
    double back = 0.0;
    std::sscanf(shorter, "%lf", &back);
    if (back == x) return shorter;
  }
  return buf;
}

}  // namespace geomae
