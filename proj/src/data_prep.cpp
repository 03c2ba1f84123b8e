#include "bnpipe/data_prep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "bnpipe/random.hpp"
#include "csv.hpp"

namespace bnpipe {

std::string_view to_string(BehaviorLabel label) {
  switch (label) {
    case BehaviorLabel::Freezing: return "freezing";
    case BehaviorLabel::Fleeing: return "fleeing";
    case BehaviorLabel::Exploring: return "exploring";
  }
  return "exploring";
}

std::optional<BehaviorLabel> parse_label(std::string_view text) {
  const auto s = detail::lower(detail::trim(text));
  if (s == "freezing") return BehaviorLabel::Freezing;
  if (s == "fleeing") return BehaviorLabel::Fleeing;
  if (s == "exploring" || s == "grooming" || s == "grooming/exploring") return BehaviorLabel::Exploring;
  return std::nullopt;
}

namespace {

std::size_t check_corpus(const std::vector<LabelSequence>& sequences) {
  if (sequences.empty()) throw Error(ErrorCode::EmptyCorpus, "no label sequences");
  const std::size_t length = sequences.front().labels.size();
  std::set<std::string> ids;
  for (const auto& s : sequences) {
    if (s.labels.size() != length) {
      throw Error(ErrorCode::RaggedSequences, "trial '" + s.trial_id + "' has " + std::to_string(s.labels.size()) +
                                                  " seconds, expected " + std::to_string(length));
    }
    if (!ids.insert(s.trial_id).second) throw Error(ErrorCode::DuplicateTrialId, "trial '" + s.trial_id + "' repeated");
  }
  if (length == 0) throw Error(ErrorCode::EmptyCorpus, "label sequences are empty");
  return length;
}

}  // namespace

SparseTensor behavior_to_matrix(const std::vector<LabelSequence>& sequences) {
  const std::size_t length = check_corpus(sequences);
  std::vector<Entry> entries;
  entries.reserve(sequences.size() * length);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    for (std::size_t t = 0; t < length; ++t) {
      entries.push_back({{i, t, 0}, is_fear(sequences[i].labels[t]) ? 1.0 : 0.0});
    }
  }
  return SparseTensor({sequences.size(), length}, std::move(entries), "behavior");
}

SparseTensor behavior_to_onehot(const std::vector<LabelSequence>& sequences) {
  const std::size_t length = check_corpus(sequences);
  std::vector<Entry> entries;
  entries.reserve(sequences.size() * length * kAllLabels.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t l = 0; l < kAllLabels.size(); ++l) {
        entries.push_back({{i, t, l}, sequences[i].labels[t] == kAllLabels[l] ? 1.0 : 0.0});
      }
    }
  }
  return SparseTensor({sequences.size(), length, kAllLabels.size()}, std::move(entries), "behavior");
}

SparseTensor sample_zeros(const SparseTensor& tensor, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw Error(ErrorCode::ConfigError, "zero-sampling ratio must be >= 0");
  std::vector<Entry> kept;
  std::vector<Entry> zeros;
  for (const auto& e : tensor.entries()) {
    if (e.value == 1.0) {
      kept.push_back(e);
    } else if (e.value == 0.0) {
      zeros.push_back(e);
    } else {
      throw Error(ErrorCode::NonBinaryTensor, "value " + format_double(e.value) + " is neither 0 nor 1");
    }
  }
  const auto wanted = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(kept.size())));
  const std::size_t take = std::min(wanted, zeros.size());
  // partial Fisher-Yates: the first `take` slots become a uniform sample
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(zeros.size() - i));
    std::swap(zeros[i], zeros[j]);
  }
  kept.insert(kept.end(), zeros.begin(), zeros.begin() + static_cast<std::ptrdiff_t>(take));
  return tensor.with_entries(std::move(kept));
}

SplitResult split(const SparseTensor& tensor, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "train_fraction must lie in (0, 1)");
  }
  const std::size_t n = tensor.size();
  if (n < 10) throw Error(ErrorCode::TooFewEntries, "split needs at least 10 entries, got " + std::to_string(n));
  // nearbyint under the default rounding mode rounds halves to even
  const auto n_train = static_cast<std::size_t>(std::nearbyint(spec.train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(std::span(order));

  std::vector<Entry> train;
  std::vector<Entry> test;
  const auto& entries = tensor.entries();
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? train : test).push_back(entries[order[i]]);
  return {tensor.with_entries(std::move(train)), tensor.with_entries(std::move(test))};
}

GridActivity grid_binarize(const std::vector<Point>& events, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "grid side must be >= 1");
  GridActivity grid(n);
  const double side = static_cast<double>(n);
  for (const auto& p : events) {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      throw Error(ErrorCode::CoordinateOutOfRange,
                  "event (" + format_double(p.x) + ", " + format_double(p.y) + ") outside [0,1]x[0,1]");
    }
    const auto row = std::min(static_cast<std::size_t>(std::floor(p.y * side)), n - 1);
    const auto col = std::min(static_cast<std::size_t>(std::floor(p.x * side)), n - 1);
    grid.cells[row * n + col] = 1;
  }
  return grid;
}

std::vector<ClassShare> class_distribution(const std::vector<LabelSequence>& sequences) {
  std::array<std::size_t, kAllLabels.size()> counts{};
  std::size_t total = 0;
  for (const auto& s : sequences) {
    for (auto label : s.labels) {
      ++counts[static_cast<std::size_t>(label)];
      ++total;
    }
  }
  if (total == 0) throw Error(ErrorCode::EmptyCorpus, "no labels to count");
  std::vector<ClassShare> shares;
  for (auto label : kAllLabels) {
    const auto c = counts[static_cast<std::size_t>(label)];
    shares.push_back({label, c, static_cast<double>(c) / static_cast<double>(total)});
  }
  return shares;
}

void write_distribution(std::ostream& out, const std::vector<ClassShare>& shares) {
  std::size_t total = 0;
  for (const auto& s : shares) total += s.count;
  out << "class,count,total,percent\n";
  for (const auto& s : shares) {
    out << to_string(s.label) << ',' << s.count << ',' << total << ',' << std::fixed << std::setprecision(3)
        << 100.0 * s.proportion << '\n';
  }
  out << std::defaultfloat;
}

std::vector<LabelSequence> read_label_csv(std::istream& in, const std::string& default_trial) {
  detail::CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::ParseError, "label file is empty");
  for (auto& h : f) h = detail::lower(h);
  const bool with_trial = f == std::vector<std::string>{"trial", "second", "label"};
  if (!with_trial && f != std::vector<std::string>{"second", "label"}) {
    reader.fail(ErrorCode::ParseError, "expected header 'second,label' or 'trial,second,label'");
  }
  std::vector<LabelSequence> out;
  std::map<std::string, std::size_t> slot;
  while (reader.next(f)) {
    if (f.size() != (with_trial ? 3u : 2u)) reader.fail(ErrorCode::ParseError, "wrong number of fields");
    const std::string trial = with_trial ? f[0] : default_trial;
    std::size_t second = 0;
    if (!detail::parse_number(f[with_trial ? 1 : 0], second)) reader.fail(ErrorCode::ParseError, "bad second '" + f[with_trial ? 1 : 0] + "'");
    const auto label = parse_label(f[with_trial ? 2 : 1]);
    if (!label) reader.fail(ErrorCode::ParseError, "unknown label '" + f[with_trial ? 2 : 1] + "'");
    auto [it, inserted] = slot.try_emplace(trial, out.size());
    if (inserted) out.push_back({{}, trial, {}});
    auto& seq = out[it->second];
    if (second != seq.labels.size()) {
      reader.fail(ErrorCode::ParseError, "trial '" + trial + "' second " + std::to_string(second) + " out of order (expected " +
                                             std::to_string(seq.labels.size()) + ")");
    }
    seq.labels.push_back(*label);
  }
  if (out.empty()) throw Error(ErrorCode::EmptyCorpus, "label file has no rows");
  return out;
}

std::vector<LabelSequence> read_label_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return read_label_csv(in, path);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

void write_label_csv(std::ostream& out, const LabelSequence& sequence) {
  out << "second,label\n";
  for (std::size_t t = 0; t < sequence.labels.size(); ++t) out << t << ',' << to_string(sequence.labels[t]) << '\n';
}

std::vector<GridActivity> read_event_csv(std::istream& in, std::size_t n) {
  detail::CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || f != std::vector<std::string>{"second", "x", "y"}) {
    reader.fail(ErrorCode::ParseError, "expected header 'second,x,y'");
  }
  std::map<std::size_t, std::vector<Point>> by_second;
  std::size_t last = 0;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail(ErrorCode::ParseError, "wrong number of fields");
    std::size_t second = 0;
    Point p{};
    if (!detail::parse_number(f[0], second) || !detail::parse_number(f[1], p.x) || !detail::parse_number(f[2], p.y)) {
      reader.fail(ErrorCode::ParseError, "malformed event row");
    }
    by_second[second].push_back(p);
    last = std::max(last, second);
  }
  std::vector<GridActivity> grids;
  for (std::size_t s = 0; s <= last && !by_second.empty(); ++s) grids.push_back(grid_binarize(by_second[s], n));
  return grids;
}

}  // namespace bnpipe
