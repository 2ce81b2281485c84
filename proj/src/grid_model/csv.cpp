#include "carbonshift/csv.hpp"

#include "carbonshift/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace carbonshift::csv {

namespace {

std::string trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool iequals(std::string_view a, std::string_view b)
{
  return a.size() == b.size()
      && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x))
               == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::vector<std::string> split_record(std::string_view line)
{
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

Table parse(std::string_view text, const std::string& source)
{
  Table table;
  table.source = source;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    // UTF-8 byte order mark on the header line
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split_record(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != table.header.size())
        throw ParseError(source, lineno,
                         "expected " + std::to_string(table.header.size()) + " fields, found "
                             + std::to_string(fields.size()));
      table.rows.push_back(std::move(fields));
      table.lines.push_back(lineno);
    }
    if (end == text.size()) break;
  }
  if (!have_header) throw ParseError(source, 0, "empty file (no header)");
  return table;
}

Table read(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

Table read_strict(const std::filesystem::path& path, const std::vector<std::string>& expected)
{
  Table t = read(path);
  if (t.header != expected) {
    std::string got;
    for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
    throw ParseError(path.string(), 1, "unexpected header: " + got);
  }
  return t;
}

std::optional<std::size_t> Table::find(std::string_view name) const
{
  for (std::size_t i = 0; i < header.size(); ++i)
    if (iequals(header[i], name)) return i;
  return std::nullopt;
}

std::size_t Table::require(std::string_view name) const
{
  if (auto c = find(name)) return *c;
  throw ParseError(source, 1, "missing column '" + std::string(name) + "'");
}

const std::string& Table::cell(std::size_t row, std::size_t col) const
{
  return rows.at(row).at(col);
}

double Table::number(std::size_t row, std::size_t col) const
{
  const std::string& s = cell(row, col);
  if (iequals(s, "inf") || iequals(s, "+inf")) return INFINITY;
  if (iequals(s, "-inf")) return -INFINITY;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(source, lines.at(row),
                     "column '" + header.at(col) + "': not a number: '" + s + "'");
  return v;
}

int Table::integer(std::size_t row, std::size_t col) const
{
  const std::string& s = cell(row, col);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(source, lines.at(row),
                     "column '" + header.at(col) + "': not an integer: '" + s + "'");
  return v;
}

std::string format_number(double value)
{
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace carbonshift::csv
