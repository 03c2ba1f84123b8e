#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bnpipe/data_prep.hpp"
#include "bnpipe/icl_sequencer.hpp"
#include "bnpipe/random.hpp"

namespace bnpipe::testing {

inline BehaviorLabel wrong_label(BehaviorLabel truth) {
  return kAllLabels[(static_cast<std::size_t>(truth) + 1) % kAllLabels.size()];
}

/// Knows the gold labels. Answers correctly when the context carries a
/// labeled previous chunk; without one it errs on every odd second.
class PrevContextLabeler : public Labeler {
 public:
  explicit PrevContextLabeler(std::vector<BehaviorLabel> gold) : gold_(std::move(gold)) {}
  LabelDecision label(const PromptContext& context) override {
    const auto truth = gold_.at(context.target.second);
    const bool has_prediction = context.prev && context.prev->label;
    if (has_prediction || context.target.second % 2 == 0) return {truth, 1.0};
    return {wrong_label(truth), 0.5};
  }

 private:
  std::vector<BehaviorLabel> gold_;
};

/// Gold sequence of `n` seconds with runs of behavior, and its chunks.
inline std::vector<BehaviorLabel> designed_gold(std::size_t n) {
  std::vector<BehaviorLabel> gold(n);
  for (std::size_t t = 0; t < n; ++t) gold[t] = kAllLabels[(t / 7) % kAllLabels.size()];
  return gold;
}

inline std::vector<Chunk> make_chunks(const std::string& trial, std::size_t n) {
  std::vector<Chunk> chunks;
  for (std::size_t t = 0; t < n; ++t) chunks.push_back({trial, t, trial + "/" + std::to_string(t) + ".mp4"});
  return chunks;
}

/// One example per class.
inline std::vector<Example> default_examples() {
  std::vector<Example> out;
  for (std::size_t i = 0; i < kAllLabels.size(); ++i) {
    out.push_back({{"example", i, "ex" + std::to_string(i) + ".mp4"}, kAllLabels[i]});
  }
  return out;
}

}  // namespace bnpipe::testing
