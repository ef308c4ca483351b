#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace whdspot {

// Plain comma-separated tables without quoting; every row must have as many
// fields as the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws a Format error naming `source` if absent.
  std::size_t column(const std::string& name, const std::string& source) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string fixed(double v, int decimals);
double parse_double(const std::string& s, const std::string& source);
long long parse_int(const std::string& s, const std::string& source);

}  // namespace whdspot
