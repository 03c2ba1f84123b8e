#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnpipe/error.hpp"

namespace bnpipe {

inline constexpr std::size_t kMaxModes = 3;

/// Coordinate of one tensor entry. Coordinates past the tensor's mode count are zero.
using Index = std::array<std::size_t, kMaxModes>;

struct Entry {
  Index index{};
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Observed-entry tensor in coordinate form with 2 or 3 modes.
///
/// Entries are kept sorted by index tuple (stable, so duplicates keep their
/// relative input order). Construction does not reject invalid content; use
/// validate() or require_valid() before handing a tensor to numerical code.
class SparseTensor {
 public:
  SparseTensor() = default;
  SparseTensor(std::vector<std::size_t> shape, std::vector<Entry> entries, std::string name = {});

  std::size_t modes() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& name() const { return name_; }

  /// Same shape and name, different entry list.
  SparseTensor with_entries(std::vector<Entry> entries) const;

  friend bool operator==(const SparseTensor&, const SparseTensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<Entry> entries_;
  std::string name_;
};

struct Violation {
  ErrorCode kind;
  std::size_t entry;  // position in entries()
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const SparseTensor& tensor);

/// Throws the first violation found, or EmptyTensor when `allow_empty` is false.
void require_valid(const SparseTensor& tensor, bool allow_empty = false);

/// True iff `index` lies inside `shape` on every mode.
bool in_bounds(std::span<const std::size_t> shape, const Index& index);

using Predictor = std::function<double(const Index&)>;

/// sqrt(mean squared residual) over the tensor's observed entries.
double rmse(const SparseTensor& tensor, const Predictor& predict);

/// Plain-text coordinate format:
///
///     dims d1 d2 [d3]
///     i j [k] value
///
/// 0-based indices, whitespace separated. Blank lines and lines starting
/// with '#' are skipped. Malformed lines raise ParseError with the line number.
SparseTensor read_coo(std::istream& in, std::string name = {});
SparseTensor read_coo_file(const std::string& path);
void write_coo(std::ostream& out, const SparseTensor& tensor);
void write_coo_file(const std::string& path, const SparseTensor& tensor);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace bnpipe
