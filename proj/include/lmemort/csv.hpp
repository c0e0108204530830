#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lmemort::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;  // source line of each row

  // Index of a named column; throws ParseError (line 1) when absent.
  std::size_t column(std::string_view name) const;
};

// Comma-separated, no quoting. Blank lines are skipped; every row must have
// exactly as many fields as the header.
Table read(std::istream& in);
Table read_file(const std::string& path);

double to_double(const std::string& field, long line);
int to_int(const std::string& field, long line);

// Shortest representation that reads back to the same double.
std::string format_double(double v);

}  // namespace lmemort::csv
