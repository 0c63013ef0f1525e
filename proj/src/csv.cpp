#include "echosim/csv.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace echosim::csv {

std::string format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_header(std::ostream& os, const std::vector<std::string>& columns,
                  const std::vector<std::string>& units, const std::vector<std::string>& notes) {
  for (const auto& n : notes) os << "# " << n << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) {
    os << "# " << columns[i];
    if (i < units.size() && !units[i].empty()) os << " [" << units[i] << ']';
    os << '\n';
  }
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
}

void write_row(std::ostream& os, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << format(values[i]);
  os << '\n';
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto r = std::from_chars(first, t.data() + t.size(), out);
  return r.ec == std::errc() && r.ptr == t.data() + t.size();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

} // namespace

Table read_numeric(std::istream& is) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto cells = split(s);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& c : cells) {
      double v;
      if (!parse_double(c, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (t.header.empty() && t.rows.empty()) {
        t.header = cells;
        width = cells.size();
        continue;
      }
      throw std::invalid_argument("malformed CSV row " + std::to_string(lineno));
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::invalid_argument("malformed CSV row " + std::to_string(lineno) + ": expected " +
                                  std::to_string(width) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

} // namespace echosim::csv
