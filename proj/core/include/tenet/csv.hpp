#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tenet {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);
double parse_number(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; throws std::out_of_range when absent.
  std::size_t column(std::string_view name) const;
};

std::string csv_escape(std::string_view field);
std::vector<std::string> parse_csv_line(std::string_view line);
std::string join_csv(const std::vector<std::string>& fields);

CsvTable read_csv(const std::filesystem::path& path);

/// Appends one row, writing `header` first when the file is new or empty.
/// Throws if an existing header differs.
void append_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                const std::vector<std::string>& row);

}  // namespace tenet
