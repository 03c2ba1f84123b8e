#include "bnpipe/icl_sequencer.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "bnpipe/random.hpp"
#include "csv.hpp"

extern char** environ;

namespace bnpipe {

using nlohmann::json;

std::string_view to_string(IclMode mode) {
  switch (mode) {
    case IclMode::NoIcl: return "no_icl";
    case IclMode::Icl: return "icl";
    case IclMode::TemporalIcl: return "temporal_icl";
    case IclMode::ArIcl: return "ar_icl";
  }
  return "icl";
}

std::optional<IclMode> parse_mode(std::string_view text) {
  for (auto m : {IclMode::NoIcl, IclMode::Icl, IclMode::TemporalIcl, IclMode::ArIcl}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

LabelDecision ScriptedLabeler::label(const PromptContext&) {
  if (next_ >= script_.size()) {
    throw Error(ErrorCode::LabelerFailure, "script exhausted after " + std::to_string(script_.size()) + " labels");
  }
  return {script_[next_++], std::nullopt};
}

LabelDecision HashRuleLabeler::label(const PromptContext& context) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the trial id
  for (unsigned char c : context.target.trial) h = (h ^ c) * 0x100000001b3ULL;
  const auto mixed = Rng::derive(Rng::derive(seed_, h), context.target.second);
  return {kAllLabels[mixed % kAllLabels.size()], std::nullopt};
}

namespace {

json chunk_json(const Chunk& c, bool with_ids) {
  json j;
  if (with_ids) {
    j["trial"] = c.trial;
    j["second"] = c.second;
  }
  j["media"] = c.media;
  return j;
}

json context_json(const PromptContext& ctx, bool with_ids) {
  json j;
  j["mode"] = std::string(to_string(ctx.mode));
  j["examples"] = json::array();
  for (const auto& e : ctx.examples) {
    auto ex = chunk_json(e.chunk, with_ids);
    ex["label"] = std::string(to_string(e.label));
    j["examples"].push_back(std::move(ex));
  }
  if (ctx.prev) {
    auto p = chunk_json(ctx.prev->chunk, with_ids);
    if (ctx.prev->label) p["label"] = std::string(to_string(*ctx.prev->label));
    j["prev"] = std::move(p);
  }
  if (ctx.next) j["next"] = chunk_json(*ctx.next, with_ids);
  j["target"] = chunk_json(ctx.target, with_ids);
  return j;
}

[[noreturn]] void labeler_failure(const std::string& what) { throw Error(ErrorCode::LabelerFailure, what); }

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe(fd) != 0) labeler_failure(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() { close_both(); }
  void close_end(int i) {
    if (fd[i] >= 0) ::close(fd[i]);
    fd[i] = -1;
  }
  void close_both() {
    close_end(0);
    close_end(1);
  }
};

/// Restores the previous SIGPIPE disposition on scope exit.
struct IgnoreSigpipe {
  struct sigaction old {};
  IgnoreSigpipe() {
    struct sigaction ign {};
    ign.sa_handler = SIG_IGN;
    sigemptyset(&ign.sa_mask);
    ::sigaction(SIGPIPE, &ign, &old);
  }
  ~IgnoreSigpipe() { ::sigaction(SIGPIPE, &old, nullptr); }
};

struct ProcessResult {
  std::string out;
  int status;
};

ProcessResult run_shell(const std::string& command, const std::string& input) {
  IgnoreSigpipe guard;
  Pipe to_child;
  Pipe from_child;

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child.fd[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child.fd[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, to_child.fd[1]);
  posix_spawn_file_actions_addclose(&actions, from_child.fd[0]);

  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) labeler_failure(std::string("cannot spawn /bin/sh: ") + std::strerror(rc));
  to_child.close_end(0);
  from_child.close_end(1);

  // Write and read concurrently so a chatty child cannot deadlock us.
  std::string out;
  std::size_t written = 0;
  bool writing = true;
  if (input.empty()) {
    to_child.close_end(1);
    writing = false;
  }
  char buf[4096];
  for (;;) {
    pollfd fds[2] = {{from_child.fd[0], POLLIN, 0}, {writing ? to_child.fd[1] : -1, POLLOUT, 0}};
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (writing && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const auto n = ::write(to_child.fd[1], input.data() + written, input.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
      if (n < 0 && errno != EINTR && errno != EAGAIN) written = input.size();  // child closed stdin
      if (written == input.size()) {
        to_child.close_end(1);
        writing = false;
      }
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const auto n = ::read(from_child.fd[0], buf, sizeof buf);
      if (n > 0) {
        out.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        break;
      }
    }
  }
  to_child.close_both();
  from_child.close_both();

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) labeler_failure(std::string("waitpid: ") + std::strerror(errno));
  }
  return {std::move(out), status};
}

}  // namespace

std::string protocol_request(const PromptContext& context) { return context_json(context, false).dump(); }

LabelDecision parse_labeler_response(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    labeler_failure("response is not JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("label") || !j["label"].is_string()) {
    labeler_failure("response lacks a string 'label'");
  }
  const auto text = j["label"].get<std::string>();
  const auto label = parse_label(text);
  if (!label) labeler_failure("unknown label '" + text + "'");
  LabelDecision d{*label, std::nullopt};
  if (j.contains("confidence") && !j["confidence"].is_null()) {
    if (!j["confidence"].is_number()) labeler_failure("'confidence' is not a number");
    d.confidence = j["confidence"].get<double>();
  }
  return d;
}

LabelDecision ExternalCommandLabeler::label(const PromptContext& context) {
  const auto result = run_shell(command_, protocol_request(context) + "\n");
  if (!WIFEXITED(result.status)) labeler_failure("labeler command terminated by a signal");
  if (WEXITSTATUS(result.status) != 0) {
    labeler_failure("labeler command exited with status " + std::to_string(WEXITSTATUS(result.status)));
  }
  std::vector<std::string_view> lines;
  std::string_view rest(result.out);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    auto line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  }
  if (lines.size() != 1) {
    labeler_failure("expected exactly one response line, got " + std::to_string(lines.size()));
  }
  return parse_labeler_response(lines.front());
}

PromptContext assemble_context(IclMode mode, std::span<const Example> examples, std::span<const Chunk> chunks,
                               std::size_t t, std::optional<BehaviorLabel> prev_prediction, bool include_next) {
  if (t >= chunks.size()) {
    throw Error(ErrorCode::IndexOutOfBounds,
                "chunk " + std::to_string(t) + " of a " + std::to_string(chunks.size()) + "-chunk sequence");
  }
  PromptContext ctx;
  ctx.mode = mode;
  ctx.target = chunks[t];
  if (mode == IclMode::NoIcl) return ctx;
  ctx.examples.assign(examples.begin(), examples.end());
  if (mode == IclMode::Icl) return ctx;

  if (t > 0) {
    ctx.prev = PreviousChunk{chunks[t - 1], std::nullopt};
    if (mode == IclMode::ArIcl) {
      if (!prev_prediction) {
        throw Error(ErrorCode::MissingPrediction, "no prediction for chunk " + std::to_string(t - 1));
      }
      ctx.prev->label = prev_prediction;
    }
  }
  const bool want_next = mode == IclMode::TemporalIcl || include_next;
  if (want_next && t + 1 < chunks.size()) ctx.next = chunks[t + 1];
  return ctx;
}

SequenceRun run_sequence(std::span<const Chunk> chunks, std::span<const Example> examples, Labeler& labeler,
                         IclMode mode, bool include_next) {
  if (chunks.empty()) throw Error(ErrorCode::Empty, "no chunks to label");
  for (std::size_t t = 1; t < chunks.size(); ++t) {
    if (chunks[t].trial != chunks[0].trial || chunks[t].second != chunks[t - 1].second + 1) {
      throw Error(ErrorCode::NonConsecutiveChunks, "chunk " + std::to_string(t) + " (trial '" + chunks[t].trial +
                                                       "', second " + std::to_string(chunks[t].second) +
                                                       ") does not follow its predecessor");
    }
  }
  SequenceRun run;
  run.labels.trial_id = chunks[0].trial;
  std::optional<BehaviorLabel> prev;
  for (std::size_t t = 0; t < chunks.size(); ++t) {
    auto ctx = assemble_context(mode, examples, chunks, t, prev, include_next);
    LabelDecision decision{};
    try {
      decision = labeler.label(ctx);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LabelerFailure) throw;
      throw Error(ErrorCode::LabelerFailure,
                  "t=" + std::to_string(t) + ": " + e.detail());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::LabelerFailure, "t=" + std::to_string(t) + ": " + e.what());
    }
    prev = decision.label;
    run.labels.labels.push_back(decision.label);
    run.trace.push_back({t, std::move(ctx), decision});
  }
  return run;
}

std::vector<std::string> audit_trace(std::span<const TraceStep> trace, std::span<const Example> examples,
                                     IclMode mode, bool include_next) {
  std::vector<std::string> issues;
  auto flag = [&](std::size_t n, const std::string& what) { issues.push_back("t=" + std::to_string(n) + ": " + what); };
  const std::size_t count = trace.size();
  const bool temporal = mode == IclMode::TemporalIcl || mode == IclMode::ArIcl;
  const bool want_next = mode == IclMode::TemporalIcl || (mode == IclMode::ArIcl && include_next);

  for (std::size_t n = 0; n < count; ++n) {
    const auto& step = trace[n];
    const auto& ctx = step.context;
    if (step.t != n) flag(n, "step index is " + std::to_string(step.t));
    if (ctx.mode != mode) flag(n, "context mode is " + std::string(to_string(ctx.mode)));
    if (n > 0 && (ctx.target.trial != trace[0].context.target.trial ||
                  ctx.target.second != trace[n - 1].context.target.second + 1)) {
      flag(n, "target is not the chunk after the previous target");
    }

    if (mode == IclMode::NoIcl) {
      if (!ctx.examples.empty()) flag(n, "examples present without in-context learning");
    } else if (!std::equal(ctx.examples.begin(), ctx.examples.end(), examples.begin(), examples.end())) {
      flag(n, "example set differs from the fixed examples");
    }

    if (!temporal) {
      if (ctx.prev) flag(n, "previous chunk present in a non-temporal mode");
      if (ctx.next) flag(n, "next chunk present in a non-temporal mode");
      continue;
    }

    if (n == 0) {
      if (ctx.prev) flag(n, "previous chunk present at the first step");
    } else if (!ctx.prev) {
      flag(n, "previous chunk missing");
    } else {
      if (!(ctx.prev->chunk == trace[n - 1].context.target)) flag(n, "previous chunk is not chunk t-1");
      if (mode == IclMode::ArIcl) {
        if (ctx.prev->label != trace[n - 1].decision.label) {
          flag(n, "previous label is not the prediction made at t-1");
        }
      } else if (ctx.prev->label) {
        flag(n, "previous chunk carries a label outside autoregressive mode");
      }
    }

    if (ctx.next) {
      if (!want_next) flag(n, "next chunk present although disabled");
      if (n + 1 >= count) {
        flag(n, "next chunk present at the last step");
      } else if (!(*ctx.next == trace[n + 1].context.target)) {
        flag(n, "next chunk is not chunk t+1");
      }
    } else if (want_next && n + 1 < count) {
      flag(n, "next chunk missing");
    }
  }
  return issues;
}

MetricsReport evaluate_run(const LabelSequence& pred, const LabelSequence& gold) {
  if (pred.labels.size() != gold.labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.labels.size()) +
                                               " labels, gold has " + std::to_string(gold.labels.size()));
  }
  return classification_report(confusion(gold.labels, pred.labels));
}

std::vector<Chunk> read_chunk_manifest(std::istream& in) {
  detail::CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::ManifestError, "chunk manifest is empty");
  for (auto& h : f) h = detail::lower(h);
  const bool with_trial = f == std::vector<std::string>{"trial", "second", "media"};
  if (!with_trial && f != std::vector<std::string>{"second", "media"}) {
    reader.fail(ErrorCode::ManifestError, "expected header 'second,media' or 'trial,second,media'");
  }
  std::vector<Chunk> chunks;
  while (reader.next(f)) {
    if (f.size() != (with_trial ? 3u : 2u)) reader.fail(ErrorCode::ManifestError, "wrong number of fields");
    Chunk c;
    c.trial = with_trial ? f[0] : "0";
    if (!detail::parse_number(f[with_trial ? 1 : 0], c.second)) {
      reader.fail(ErrorCode::ManifestError, "bad second '" + f[with_trial ? 1 : 0] + "'");
    }
    c.media = f[with_trial ? 2 : 1];
    if (!chunks.empty() && c.trial != chunks.front().trial) {
      reader.fail(ErrorCode::ManifestError, "a chunk manifest holds a single trial");
    }
    chunks.push_back(std::move(c));
  }
  if (chunks.empty()) throw Error(ErrorCode::ManifestError, "chunk manifest lists no chunks");
  return chunks;
}

std::vector<Example> read_example_manifest(std::istream& in) {
  detail::CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::ManifestError, "example manifest is empty");
  for (auto& h : f) h = detail::lower(h);
  if (f != std::vector<std::string>{"media", "label"}) reader.fail(ErrorCode::ManifestError, "expected header 'media,label'");
  std::vector<Example> examples;
  while (reader.next(f)) {
    if (f.size() != 2) reader.fail(ErrorCode::ManifestError, "wrong number of fields");
    const auto label = parse_label(f[1]);
    if (!label) reader.fail(ErrorCode::ManifestError, "unknown label '" + f[1] + "'");
    examples.push_back({{"example", examples.size(), f[0]}, *label});
  }
  return examples;
}

namespace {

template <class Read>
auto read_manifest_file(const std::string& path, Read read) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return read(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

}  // namespace

std::vector<Chunk> read_chunk_manifest_file(const std::string& path) {
  return read_manifest_file(path, [](std::istream& in) { return read_chunk_manifest(in); });
}

std::vector<Example> read_example_manifest_file(const std::string& path) {
  return read_manifest_file(path, [](std::istream& in) { return read_example_manifest(in); });
}

void write_trace_jsonl(std::ostream& out, std::span<const TraceStep> trace) {
  for (const auto& step : trace) {
    json j;
    j["t"] = step.t;
    j["context"] = context_json(step.context, true);
    j["decision"]["label"] = std::string(to_string(step.decision.label));
    if (step.decision.confidence) {
      j["decision"]["confidence"] = *step.decision.confidence;
    } else {
      j["decision"]["confidence"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace bnpipe
