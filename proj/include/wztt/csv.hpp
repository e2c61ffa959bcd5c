#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wztt::csv {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that parses back to the same double.
std::string format(double value);

double parse_double(std::string_view field);
std::int64_t parse_int(std::string_view field);

/// Split one line on commas. No quoting: every schema here is numeric or
/// uses identifiers without commas.
std::vector<std::string_view> split(std::string_view line);

/// Whole-file reader returning header + rows of fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);

/// Stream rows of a file whose header must equal `expected`; `fn` receives
/// the fields of each data row. Suitable for files too large to hold as text.
void for_each_row(const std::filesystem::path& path, const std::vector<std::string>& expected,
                  const std::function<void(std::span<const std::string_view>)>& fn);

/// Require `header` to equal `expected` exactly, otherwise throw naming the file.
void expect_header(const Table& table, const std::vector<std::string>& expected,
                   const std::filesystem::path& path);

/// Line-oriented writer. Opens the file truncated; throws on failure.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((write_field(fields, first)), ...);
    out_ << '\n';
  }

  void row(const std::vector<std::string>& fields);

  void flush() { out_.flush(); }

 private:
  void separator(bool& first) {
    if (!first) out_ << ',';
    first = false;
  }
  void write_field(double v, bool& first) {
    separator(first);
    out_ << format(v);
  }
  void write_field(const std::string& v, bool& first) {
    separator(first);
    out_ << v;
  }
  void write_field(const char* v, bool& first) {
    separator(first);
    out_ << v;
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void write_field(Int v, bool& first) {
    separator(first);
    out_ << v;
  }

  std::ofstream out_;
};

}  // namespace wztt::csv
