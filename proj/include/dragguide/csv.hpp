#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace dragguide {

[[nodiscard]] std::string format_real(double value);

/// Comma-separated output with a header row; reals use 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void header(std::initializer_list<std::string_view> columns);
  void header(const std::vector<std::string>& columns);

  template <typename... Fields>
  void row(const Fields&... fields) {
    std::ostringstream line;
    bool first = true;
    (append(line, fields, first), ...);
    out_ << line.str() << '\n';
  }

 private:
  template <typename T>
  static void append(std::ostringstream& line, const T& value, bool& first) {
    if (!first) line << ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>) {
      line << format_real(static_cast<double>(value));
    } else {
      line << value;
    }
  }

  std::ofstream out_;
};

/// Splits one CSV line on commas. Quoting is not supported.
[[nodiscard]] std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace dragguide
