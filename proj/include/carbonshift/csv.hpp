#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carbonshift::csv {

struct Table
{
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number of each row in the source file.
  std::vector<std::size_t> lines;

  /// Column position by case-insensitive name.
  std::optional<std::size_t> find(std::string_view name) const;
  /// Like find() but throws ParseError when the column is missing.
  std::size_t require(std::string_view name) const;

  double number(std::size_t row, std::size_t col) const;
  int integer(std::size_t row, std::size_t col) const;
  const std::string& cell(std::size_t row, std::size_t col) const;
};

/// Splits one record. Double-quoted fields may contain commas.
std::vector<std::string> split_record(std::string_view line);

Table read(const std::filesystem::path& path);
Table parse(std::string_view text, const std::string& source = "<memory>");

/// Strict read: the header must equal `expected` exactly and every row must
/// have that many fields.
Table read_strict(const std::filesystem::path& path, const std::vector<std::string>& expected);

std::string format_number(double value);

}  // namespace carbonshift::csv
