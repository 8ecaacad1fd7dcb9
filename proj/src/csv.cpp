#include "volharm/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "volharm/error.hpp"

namespace volharm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

bool CsvTable::has_column(const std::string& name) const { return column(name) >= 0; }

const std::string& CsvTable::cell(std::size_t row, int col) const {
  static const std::string empty;
  if (col < 0 || row >= rows.size()) return empty;
  const auto& r = rows[row];
  if (static_cast<std::size_t>(col) >= r.size()) return empty;
  return r[static_cast<std::size_t>(col)];
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path + "' for reading");
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && line.empty()) continue;
    if (first) {
      table.header = split_line(line);
      first = false;
    } else {
      if (line.empty()) continue;
      table.rows.push_back(split_line(line));
    }
  }
  if (first) throw Error(Errc::IoError, "'" + path + "' is empty");
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out << ',';
    out << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::IoError, "write to '" + path + "' failed");
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_optional_double(const std::string& cell,
                                            const std::string& context) {
  // Allow surrounding spaces; an all-space cell counts as empty.
  std::size_t b = cell.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = cell.find_last_not_of(" \t") + 1;
  double value = 0.0;
  auto res = std::from_chars(cell.data() + b, cell.data() + e, value);
  if (res.ec != std::errc() || res.ptr != cell.data() + e) {
    throw Error(Errc::SchemaMismatch, "bad numeric value '" + cell + "' in " + context);
  }
  return value;
}

double parse_double(const std::string& cell, const std::string& context) {
  auto value = parse_optional_double(cell, context);
  if (!value) throw Error(Errc::SchemaMismatch, "missing required value in " + context);
  return *value;
}

}  // namespace volharm
