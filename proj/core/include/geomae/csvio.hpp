#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geomae/tensor.hpp"

namespace geomae {

// UTF-8 CSV with a header row. Cells are comma-separated and never quoted;
// list-valued cells join their items with ';'.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(const std::string& name) const;          // throws DataError
  const std::string& cell(Index row, Index col) const { return rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)]; }
  Index size() const { return static_cast<Index>(rows.size()); }
};

CsvTable read_csv(const std::filesystem::path& file);
void write_csv(const std::filesystem::path& file, const CsvTable& table);

std::vector<std::string> split_list(const std::string& cell, char sep = ';');

double parse_double(const std::string& cell, const std::string& context);
long long parse_int(const std::string& cell, const std::string& context);

std::string format_double(double x);  // shortest round-trip form

}  // namespace geomae
