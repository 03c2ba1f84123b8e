#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bnpipe/data_prep.hpp"
#include "bnpipe/metrics.hpp"

namespace bnpipe {

/// Context variants handed to a labeler.
///   NoIcl        target only
///   Icl          fixed examples + target
///   TemporalIcl  fixed examples + unlabeled previous and next chunks + target
///   ArIcl        fixed examples + previous chunk with its predicted label
///                + unlabeled next chunk + target
enum class IclMode { NoIcl, Icl, TemporalIcl, ArIcl };

std::string_view to_string(IclMode mode);
std::optional<IclMode> parse_mode(std::string_view text);

/// One second of video.
struct Chunk {
  std::string trial;
  std::size_t second = 0;
  std::string media;  // opaque locator

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct Example {
  Chunk chunk;
  BehaviorLabel label;

  friend bool operator==(const Example&, const Example&) = default;
};

struct PreviousChunk {
  Chunk chunk;
  std::optional<BehaviorLabel> label;  // set only in ArIcl

  friend bool operator==(const PreviousChunk&, const PreviousChunk&) = default;
};

struct PromptContext {
  IclMode mode = IclMode::Icl;
  std::vector<Example> examples;
  std::optional<PreviousChunk> prev;
  std::optional<Chunk> next;
  Chunk target;

  friend bool operator==(const PromptContext&, const PromptContext&) = default;
};

struct LabelDecision {
  BehaviorLabel label;
  std::optional<double> confidence;

  friend bool operator==(const LabelDecision&, const LabelDecision&) = default;
};

class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual LabelDecision label(const PromptContext& context) = 0;
};

/// Returns a fixed script in order; running past its end is a failure.
class ScriptedLabeler : public Labeler {
 public:
  explicit ScriptedLabeler(std::vector<BehaviorLabel> script) : script_(std::move(script)) {}
  LabelDecision label(const PromptContext& context) override;

 private:
  std::vector<BehaviorLabel> script_;
  std::size_t next_ = 0;
};

/// Label is a pure function of (seed, trial, second) of the target chunk.
class HashRuleLabeler : public Labeler {
 public:
  explicit HashRuleLabeler(std::uint64_t seed) : seed_(seed) {}
  LabelDecision label(const PromptContext& context) override;

 private:
  std::uint64_t seed_;
};

/// Runs `command` through /bin/sh once per chunk. The context is written as
/// one JSON object on stdin:
///
///     {"mode": "...", "examples": [{"media": "...", "label": "..."}],
///      "prev": {"media": "...", "label": "..."}, "next": {"media": "..."},
///      "target": {"media": "..."}}
///
/// (`prev`, `next` and `prev.label` omitted when absent). The command must
/// print exactly one line `{"label": "...", "confidence": 0.9}` (confidence
/// optional) and exit 0.
class ExternalCommandLabeler : public Labeler {
 public:
  explicit ExternalCommandLabeler(std::string command) : command_(std::move(command)) {}
  LabelDecision label(const PromptContext& context) override;

 private:
  std::string command_;
};

/// Parses one response line of the external labeler protocol.
LabelDecision parse_labeler_response(std::string_view line);

/// The single-line JSON request sent to external labelers.
std::string protocol_request(const PromptContext& context);

/// Builds the context for chunk t. The previous element is omitted at t = 0
/// and the next element at t = T-1. `include_next` switches the next chunk
/// off for ArIcl.
PromptContext assemble_context(IclMode mode, std::span<const Example> examples, std::span<const Chunk> chunks,
                               std::size_t t, std::optional<BehaviorLabel> prev_prediction, bool include_next = true);

struct TraceStep {
  std::size_t t;
  PromptContext context;
  LabelDecision decision;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct SequenceRun {
  LabelSequence labels;
  std::vector<TraceStep> trace;
};

/// Labels chunks strictly in order; in ArIcl mode the label at t is fed into
/// the context at t+1. Chunks must share one trial with consecutive seconds.
SequenceRun run_sequence(std::span<const Chunk> chunks, std::span<const Example> examples, Labeler& labeler,
                         IclMode mode, bool include_next = true);

/// Returns human-readable violations of the context invariants for the
/// mode: causality (no chunk past t+1, no prediction other than t-1), the
/// autoregressive threading, and mode ablation rules. Empty means clean.
std::vector<std::string> audit_trace(std::span<const TraceStep> trace, std::span<const Example> examples,
                                     IclMode mode, bool include_next = true);

MetricsReport evaluate_run(const LabelSequence& pred, const LabelSequence& gold);

/// CSV `second,media` or `trial,second,media`, one trial per manifest.
/// ManifestError (with line number) on a bad header, row, or an empty list.
std::vector<Chunk> read_chunk_manifest(std::istream& in);
std::vector<Chunk> read_chunk_manifest_file(const std::string& path);

/// CSV `media,label`. Example chunks get trial "example" and their row index.
std::vector<Example> read_example_manifest(std::istream& in);
std::vector<Example> read_example_manifest_file(const std::string& path);

/// One JSON object per line: {"t", "context", "decision"}.
void write_trace_jsonl(std::ostream& out, std::span<const TraceStep> trace);

}  // namespace bnpipe
