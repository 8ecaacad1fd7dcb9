#pragma once

#include <optional>
#include <string>
#include <vector>

namespace volharm {

// In-memory CSV table: a header and string cells. Empty cells encode absent
// optional values throughout the toolkit.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, -1 if missing.
  int column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  const std::string& cell(std::size_t row, int col) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

// Strict parse of a full cell; empty -> nullopt; garbage -> error with context.
std::optional<double> parse_optional_double(const std::string& cell,
                                            const std::string& context);
double parse_double(const std::string& cell, const std::string& context);

}  // namespace volharm
