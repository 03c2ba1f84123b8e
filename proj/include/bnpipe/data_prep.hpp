#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnpipe/tensor.hpp"

namespace bnpipe {

/// Per-second behavior class. Grooming and exploring are one class.
enum class BehaviorLabel { Freezing, Fleeing, Exploring };

inline constexpr std::array<BehaviorLabel, 3> kAllLabels{BehaviorLabel::Freezing, BehaviorLabel::Fleeing,
                                                         BehaviorLabel::Exploring};

std::string_view to_string(BehaviorLabel label);

/// Case-insensitive; accepts freezing, fleeing, exploring, grooming,
/// grooming/exploring.
std::optional<BehaviorLabel> parse_label(std::string_view text);

/// Freezing and fleeing encode fear (1); exploring encodes safety (0).
inline bool is_fear(BehaviorLabel label) { return label != BehaviorLabel::Exploring; }

struct LabelSequence {
  std::vector<BehaviorLabel> labels;  // labels[t] for second t = 0..T-1
  std::string trial_id;
  std::string subject_id;

  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

/// n x n binary activity map for one second.
struct GridActivity {
  std::size_t n = 0;
  std::vector<std::uint8_t> cells;  // row-major, cells[row * n + col]

  explicit GridActivity(std::size_t side = 0) : n(side), cells(side * side, 0) {}
  std::uint8_t at(std::size_t row, std::size_t col) const { return cells[row * n + col]; }

  friend bool operator==(const GridActivity&, const GridActivity&) = default;
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

struct SplitResult {
  SparseTensor train;
  SparseTensor test;
};

/// trial x time binary matrix, one row per sequence in input order, every
/// cell materialized as an observed entry.
SparseTensor behavior_to_matrix(const std::vector<LabelSequence>& sequences);

/// trial x time x 3 one-hot tensor (behavior mode in kAllLabels order).
SparseTensor behavior_to_onehot(const std::vector<LabelSequence>& sequences);

/// Keeps every one-valued entry and ceil(ratio * ones) zero entries drawn
/// uniformly without replacement (capped at the zeros available).
SparseTensor sample_zeros(const SparseTensor& tensor, double ratio, std::uint64_t seed);

/// Uniform random partition; |train| = round-half-to-even(train_fraction * N).
SplitResult split(const SparseTensor& tensor, const SplitSpec& spec);

struct Point {
  double x;
  double y;
};

/// Marks cell (min(floor(y*n), n-1), min(floor(x*n), n-1)) for every event.
GridActivity grid_binarize(const std::vector<Point>& events, std::size_t n);

struct ClassShare {
  BehaviorLabel label;
  std::size_t count;
  double proportion;
};

/// One row per class in kAllLabels order.
std::vector<ClassShare> class_distribution(const std::vector<LabelSequence>& sequences);

/// Human-readable distribution table (counts, proportions with three decimals in percent).
void write_distribution(std::ostream& out, const std::vector<ClassShare>& shares);

/// Label CSV with header `second,label` or `trial,second,label`. Seconds
/// must be contiguous from 0 within a trial. Without a trial column the
/// whole file is one trial whose id is `default_trial`.
std::vector<LabelSequence> read_label_csv(std::istream& in, const std::string& default_trial = "0");
std::vector<LabelSequence> read_label_csv_file(const std::string& path);
void write_label_csv(std::ostream& out, const LabelSequence& sequence);

/// Event CSV `second,x,y` -> one grid per second 0..max_second.
std::vector<GridActivity> read_event_csv(std::istream& in, std::size_t n);

}  // namespace bnpipe
