#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace redirect {

/// Shortest round-trip decimal form; NaN becomes an empty field and
/// infinities "inf" / "-inf".
std::string format_number(double v);
std::string format_number(std::size_t v);

/// RFC 4180 quoting when the field holds a comma, quote or newline.
std::string csv_field(std::string_view s);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  void row(const std::vector<std::string>& fields);
  void row(std::initializer_list<std::string_view> fields);

 private:
  std::ostream* out_;
};

/// Writes `content` to `path` atomically enough for our purposes: a
/// temporary sibling is written and renamed over the target.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace redirect
