#include "bnpipe/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace bnpipe {

namespace {

bool index_less(const Entry& a, const Entry& b) { return a.index < b.index; }

std::string format_index(const Index& index, std::size_t modes) {
  std::string out = "(";
  for (std::size_t m = 0; m < modes; ++m) {
    if (m) out += ",";
    out += std::to_string(index[m]);
  }
  return out + ")";
}

}  // namespace

SparseTensor::SparseTensor(std::vector<std::size_t> shape, std::vector<Entry> entries, std::string name)
    : shape_(std::move(shape)), entries_(std::move(entries)), name_(std::move(name)) {
  if (shape_.size() < 2 || shape_.size() > kMaxModes) {
    throw Error(ErrorCode::ShapeMismatch,
                "tensor must have 2 or 3 modes, got " + std::to_string(shape_.size()));
  }
  for (auto& e : entries_) {
    for (std::size_t m = shape_.size(); m < kMaxModes; ++m) e.index[m] = 0;
  }
  std::stable_sort(entries_.begin(), entries_.end(), index_less);
}

SparseTensor SparseTensor::with_entries(std::vector<Entry> entries) const {
  return SparseTensor(shape_, std::move(entries), name_);
}

bool in_bounds(std::span<const std::size_t> shape, const Index& index) {
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (index[m] >= shape[m]) return false;
  }
  return true;
}

ValidationReport validate(const SparseTensor& tensor) {
  ValidationReport report;
  const auto& entries = tensor.entries();
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const auto& e = entries[n];
    if (!in_bounds(tensor.shape(), e.index)) {
      report.violations.push_back({ErrorCode::IndexOutOfBounds, n,
                                   "index " + format_index(e.index, tensor.modes()) + " outside shape"});
    }
    if (!std::isfinite(e.value)) {
      report.violations.push_back({ErrorCode::NonFiniteValue, n,
                                   "value at " + format_index(e.index, tensor.modes()) + " is not finite"});
    }
    // entries are sorted, so duplicates are adjacent
    if (n > 0 && entries[n - 1].index == e.index) {
      report.violations.push_back({ErrorCode::DuplicateIndex, n,
                                   "index " + format_index(e.index, tensor.modes()) + " repeated"});
    }
  }
  return report;
}

void require_valid(const SparseTensor& tensor, bool allow_empty) {
  const auto report = validate(tensor);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    std::string label = tensor.name().empty() ? "tensor" : "tensor '" + tensor.name() + "'";
    throw Error(v.kind, label + " entry " + std::to_string(v.entry) + ": " + v.detail);
  }
  if (!allow_empty && tensor.empty()) {
    throw Error(ErrorCode::EmptyTensor, tensor.name().empty() ? "tensor has no entries"
                                                              : "tensor '" + tensor.name() + "' has no entries");
  }
}

double rmse(const SparseTensor& tensor, const Predictor& predict) {
  if (tensor.empty()) throw Error(ErrorCode::EmptyTensor, "rmse of a tensor with no entries");
  double sum = 0.0;
  for (const auto& e : tensor.entries()) {
    const double r = e.value - predict(e.index);
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(tensor.size()));
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

namespace {

template <class T>
bool parse_token(std::string_view token, T& out) {
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

SparseTensor read_coo(std::istream& in, std::string name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> shape;
  std::vector<Entry> entries;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (!have_header) {
      if (tokens.front() != "dims") parse_fail(line_no, "expected 'dims d1 d2 [d3]' header");
      if (tokens.size() < 3 || tokens.size() > kMaxModes + 1) parse_fail(line_no, "header needs 2 or 3 mode sizes");
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        std::size_t d = 0;
        if (!parse_token(tokens[t], d)) parse_fail(line_no, "bad mode size '" + std::string(tokens[t]) + "'");
        shape.push_back(d);
      }
      have_header = true;
      continue;
    }
    if (tokens.size() != shape.size() + 1) {
      parse_fail(line_no, "expected " + std::to_string(shape.size()) + " indices and a value");
    }
    Entry e;
    for (std::size_t m = 0; m < shape.size(); ++m) {
      if (!parse_token(tokens[m], e.index[m])) parse_fail(line_no, "bad index '" + std::string(tokens[m]) + "'");
    }
    if (!parse_token(tokens.back(), e.value)) parse_fail(line_no, "bad value '" + std::string(tokens.back()) + "'");
    entries.push_back(e);
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no + 1) + ": missing dims header");
  return SparseTensor(std::move(shape), std::move(entries), std::move(name));
}

SparseTensor read_coo_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return read_coo(in, path);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

void write_coo(std::ostream& out, const SparseTensor& tensor) {
  out << "dims";
  for (auto d : tensor.shape()) out << ' ' << d;
  out << '\n';
  for (const auto& e : tensor.entries()) {
    for (std::size_t m = 0; m < tensor.modes(); ++m) out << e.index[m] << ' ';
    out << format_double(e.value) << '\n';
  }
}

void write_coo_file(const std::string& path, const SparseTensor& tensor) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  write_coo(out, tensor);
}

}  // namespace bnpipe
