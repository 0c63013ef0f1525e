#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace echosim::csv {

/// 17 significant digits, shortest round-trip not required.
std::string format(double v);

/// "# name [unit]" comment block followed by the header row.
void write_header(std::ostream& os, const std::vector<std::string>& columns,
                  const std::vector<std::string>& units,
                  const std::vector<std::string>& notes = {});

void write_row(std::ostream& os, const std::vector<double>& values);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a numeric CSV. Lines starting with '#' and blank lines are skipped;
/// a first non-numeric row is taken as the header. Throws
/// std::invalid_argument naming the 1-based line number on malformed rows.
Table read_numeric(std::istream& is);

} // namespace echosim::csv
