#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seqdesign::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number in the file for each row, for error messages.
  std::vector<std::size_t> line_numbers;

  std::size_t column(std::string_view name) const;  // throws DataError
};

// Plain comma-separated values without quoting. Every row must have as many
// fields as the header; violations raise DataError naming the line.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text, std::string_view source = "<memory>");

double to_double(const std::string& field, std::size_t line, std::string_view column);
long long to_int(const std::string& field, std::size_t line, std::string_view column);

std::string join(const std::vector<std::string>& fields);

void write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace seqdesign::csv
