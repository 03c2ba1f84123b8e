#pragma once

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "bnpipe/error.hpp"

namespace bnpipe::detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

/// Reads non-blank lines, tracking 1-based line numbers.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (trim(line).empty()) continue;
      fields = split_csv(line);
      return true;
    }
    return false;
  }

  std::size_t line() const { return line_; }

  [[noreturn]] void fail(ErrorCode code, const std::string& what) const {
    throw Error(code, "line " + std::to_string(line_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace bnpipe::detail
