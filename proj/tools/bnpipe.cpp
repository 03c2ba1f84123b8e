// bnpipe: prepare -> fit -> eval -> components -> label -> metrics / kappa.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "bnpipe/data_prep.hpp"
#include "bnpipe/decomposition.hpp"
#include "bnpipe/error.hpp"
#include "bnpipe/icl_sequencer.hpp"
#include "bnpipe/metrics.hpp"
#include "bnpipe/model_io.hpp"
#include "bnpipe/neat.hpp"
#include "bnpipe/random.hpp"
#include "bnpipe/tensor.hpp"

namespace {

using namespace bnpipe;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return in;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

/// The subcommand's section with every option, defaults included; loadable via --config.
void write_resolved(const CLI::App& sub, const std::string& prefix) {
  write_text(prefix + ".config.resolved", "[" + sub.get_name() + "]\n" + sub.config_to_str(true, false));
}

/// ExistingFile that also accepts the empty string, so a resolved config
/// with unset optional paths loads back.
const CLI::Validator kOptionalFile(
    [](std::string& path) { return path.empty() ? std::string() : CLI::ExistingFile(path); }, "FILE");

// prepare ------------------------------------------------------------------

struct PrepareArgs {
  std::vector<std::string> labels;
  std::string out;
  double zero_ratio = 1.0;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

void run_prepare(const PrepareArgs& a, const CLI::App& app) {
  std::vector<LabelSequence> corpus;
  for (const auto& path : a.labels) {
    auto seqs = read_label_csv_file(path);
    corpus.insert(corpus.end(), std::make_move_iterator(seqs.begin()), std::make_move_iterator(seqs.end()));
  }
  const auto matrix = behavior_to_matrix(corpus);
  const auto sampled = sample_zeros(matrix, a.zero_ratio, a.seed);
  const auto parts = split(sampled, {a.train_fraction, Rng::derive(a.seed, 1)});

  write_coo_file(a.out + ".train.coo", parts.train);
  write_coo_file(a.out + ".test.coo", parts.test);
  auto dist = open_out(a.out + ".dist.txt");
  write_distribution(dist, class_distribution(corpus));
  write_resolved(app, a.out);
  std::cout << "trials=" << corpus.size() << " seconds=" << matrix.dim(1) << " sampled=" << sampled.size()
            << " train=" << parts.train.size() << " test=" << parts.test.size() << '\n';
}

// fit ----------------------------------------------------------------------

struct FitArgs {
  std::string model = "cpd";
  std::string x;
  std::string y;
  std::string out;
  std::string nonneg = "softplus";
  TrainConfig config;
};

bool is_coupled(const std::string& kind) { return kind == "coupled-cpd" || kind == "coupled-neat"; }

void save_fit(const std::string& prefix, const AnyModel& model, const FitReport& report) {
  write_model_file(prefix + ".model.json", model);
  auto out = open_out(prefix + ".report.json");
  write_fit_report(out, report);
  if (const auto* m = std::get_if<CpModel>(&model)) {
    auto f = open_out(prefix + ".factors.csv");
    write_factors_csv(f, *m);
  } else if (const auto* m = std::get_if<CoupledCpModel>(&model)) {
    auto f = open_out(prefix + ".factors.csv");
    write_factors_csv(f, *m);
  }
}

template <class Model, class Fit>
void fit_and_save(const std::string& prefix, Fit&& fit) {
  try {
    auto result = fit();
    save_fit(prefix, result.model, result.report);
    std::cout << "final_train_rmse=" << format_double(result.report.final_train_rmse)
              << " epochs=" << result.report.history.back().epoch
              << " stopped_early=" << (result.report.stopped_early ? "true" : "false") << '\n';
  } catch (const NonFiniteLoss<Model>& e) {
    save_fit(prefix, e.last_finite(), e.report());
    throw;
  }
}

void run_fit(FitArgs a, const CLI::App& app) {
  const auto map = parse_nonneg(a.nonneg);
  if (!map) throw Error(ErrorCode::ConfigError, "unknown --nonneg '" + a.nonneg + "'");
  a.config.nonneg = *map;
  check_config(a.config);
  if (is_coupled(a.model) && a.y.empty()) throw Error(ErrorCode::ConfigError, a.model + " needs --y");
  if (!is_coupled(a.model) && !a.y.empty()) throw Error(ErrorCode::ConfigError, a.model + " takes no --y");

  const auto x = read_coo_file(a.x);
  write_resolved(app, a.out);
  if (a.model == "cpd") {
    fit_and_save<CpModel>(a.out, [&] { return fit_cp(x, a.config); });
  } else if (a.model == "neat") {
    fit_and_save<NeatModel>(a.out, [&] { return fit_neat(x, a.config); });
  } else {
    const auto y = read_coo_file(a.y);
    if (a.model == "coupled-cpd") {
      fit_and_save<CoupledCpModel>(a.out, [&] { return fit_coupled_cp(x, y, a.config); });
    } else {
      fit_and_save<CoupledNeatModel>(a.out, [&] { return fit_coupled_neat(x, y, a.config); });
    }
  }
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string model_file;
  std::string x;
  std::string y;
  std::string out;
};

void run_eval(const EvalArgs& a, const CLI::App& app) {
  const auto model = read_model_file(a.model_file);
  const auto x = read_coo_file(a.x);
  std::optional<SparseTensor> y;
  if (!a.y.empty()) y = read_coo_file(a.y);
  const auto r = evaluate_model(model, x, y ? &*y : nullptr);
  std::ostringstream text;
  text << "rmse_x=" << format_double(r.rmse_x) << '\n';
  if (r.rmse_y) text << "rmse_y=" << format_double(*r.rmse_y) << '\n';
  std::cout << text.str();
  if (!a.out.empty()) {
    write_text(a.out + ".eval.txt", text.str());
    write_resolved(app, a.out);
  }
}

// components ---------------------------------------------------------------

struct ComponentsArgs {
  std::string model_file;
  std::string out;
  double threshold = 0.5;
};

std::vector<std::string> single_tags(std::span<const double> scores, double threshold) {
  double top = 0.0;
  for (double s : scores) top = std::max(top, s);
  if (!(top > 0.0)) throw Error(ErrorCode::DegenerateScores, "largest contribution score is not positive");
  std::vector<std::string> tags;
  for (double s : scores) tags.emplace_back(s / top >= threshold ? "Active" : "Inactive");
  return tags;
}

void run_components(const ComponentsArgs& a, const CLI::App& app) {
  const auto model = read_model_file(a.model_file);
  std::vector<double> sx;
  std::vector<double> sy;
  if (const auto* m = std::get_if<CpModel>(&model)) {
    sx = effective(m->weights, m->nonneg);
  } else if (const auto* m = std::get_if<CoupledCpModel>(&model)) {
    sx = effective(m->weights_x, m->nonneg);
    sy = effective(m->weights_y, m->nonneg);
  } else if (const auto* m = std::get_if<NeatModel>(&model)) {
    for (std::size_t r = 0; r < m->rank(); ++r) sx.push_back(component_contribution(*m, r));
  } else if (const auto* m = std::get_if<CoupledNeatModel>(&model)) {
    for (std::size_t r = 0; r < m->rank(); ++r) {
      sx.push_back(component_contribution(*m, Which::X, r));
      sy.push_back(component_contribution(*m, Which::Y, r));
    }
  }
  const bool coupled =
      std::holds_alternative<CoupledCpModel>(model) || std::holds_alternative<CoupledNeatModel>(model);
  std::vector<std::string> tags;
  if (coupled) {
    for (auto t : tag_components(sx, sy, a.threshold)) tags.emplace_back(to_string(t));
  } else {
    tags = single_tags(sx, a.threshold);
  }

  std::ostringstream csv;
  csv << "component,score_x,score_y,tag\n";
  for (std::size_t r = 0; r < sx.size(); ++r) {
    csv << r << ',' << format_double(sx[r]) << ',' << (coupled ? format_double(sy[r]) : "") << ',' << tags[r] << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out + ".components.csv", csv.str());
    write_resolved(app, a.out);
  }
}

// label --------------------------------------------------------------------

struct LabelArgs {
  std::string chunks;
  std::string examples;
  std::string mode = "ar_icl";
  std::string labeler;
  std::string gold;
  std::string out;
  bool no_next = false;
};

std::unique_ptr<Labeler> make_labeler(const std::string& spec) {
  const auto colon = spec.find(':');
  const auto kind = spec.substr(0, colon);
  const auto arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  if (colon == std::string::npos || arg.empty()) {
    throw Error(ErrorCode::ConfigError, "labeler spec must be scripted:<file>, hash:<seed> or cmd:<command>");
  }
  if (kind == "scripted") {
    const auto seqs = read_label_csv_file(arg);
    if (seqs.size() != 1) throw Error(ErrorCode::ParseError, arg + ": a script holds a single trial");
    return std::make_unique<ScriptedLabeler>(seqs.front().labels);
  }
  if (kind == "hash") {
    std::uint64_t seed = 0;
    std::size_t used = 0;
    try {
      seed = std::stoull(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size()) throw Error(ErrorCode::ConfigError, "hash labeler seed '" + arg + "' is not an integer");
    return std::make_unique<HashRuleLabeler>(seed);
  }
  if (kind == "cmd") return std::make_unique<ExternalCommandLabeler>(arg);
  throw Error(ErrorCode::ConfigError, "unknown labeler kind '" + kind + "'");
}

void run_label(const LabelArgs& a, const CLI::App& app) {
  const auto mode = parse_mode(a.mode);
  if (!mode) throw Error(ErrorCode::ConfigError, "unknown --mode '" + a.mode + "'");
  auto labeler = make_labeler(a.labeler);
  const auto chunks = read_chunk_manifest_file(a.chunks);
  const auto examples = a.examples.empty() ? std::vector<Example>{} : read_example_manifest_file(a.examples);
  write_resolved(app, a.out);

  const auto run = run_sequence(chunks, examples, *labeler, *mode, !a.no_next);

  auto pred = open_out(a.out + ".pred.csv");
  pred << "second,label\n";
  for (std::size_t t = 0; t < chunks.size(); ++t) pred << chunks[t].second << ',' << to_string(run.labels.labels[t]) << '\n';
  auto trace = open_out(a.out + ".trace.jsonl");
  write_trace_jsonl(trace, run.trace);
  std::cout << "labeled=" << chunks.size() << " mode=" << to_string(*mode) << '\n';

  if (!a.gold.empty()) {
    const auto gold = read_label_csv_file(a.gold);
    if (gold.size() != 1) throw Error(ErrorCode::ParseError, a.gold + ": gold file holds a single trial");
    const auto report = evaluate_run(run.labels, gold.front());
    std::ostringstream text;
    write_report(text, report);
    write_text(a.out + ".metrics.txt", text.str());
    std::cout << text.str();
  }
}

// metrics / kappa ----------------------------------------------------------

struct MetricsArgs {
  std::string gold;
  std::string pred;
  std::string out;
};

std::vector<BehaviorLabel> flatten(const std::vector<LabelSequence>& seqs) {
  std::vector<BehaviorLabel> out;
  for (const auto& s : seqs) out.insert(out.end(), s.labels.begin(), s.labels.end());
  return out;
}

void run_metrics(const MetricsArgs& a, const CLI::App& app) {
  const auto gold = flatten(read_label_csv_file(a.gold));
  const auto pred = flatten(read_label_csv_file(a.pred));
  const auto report = classification_report(confusion(gold, pred));
  std::ostringstream text;
  write_report(text, report);
  std::cout << text.str();
  if (!a.out.empty()) {
    write_text(a.out + ".metrics.txt", text.str());
    write_resolved(app, a.out);
  }
}

struct KappaArgs {
  std::string scores;
};

void run_kappa(const KappaArgs& a) {
  auto in = open_in(a.scores);
  std::vector<ScorePair> pairs;
  try {
    pairs = read_score_csv(in);
  } catch (const Error& e) {
    throw Error(e.code(), a.scores + ": " + e.detail());
  }
  std::cout << "pairs=" << pairs.size() << '\n' << "kappa=" << format_double(quadratic_weighted_kappa(pairs)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior/neural tensor pipeline: prepare, fit, evaluate, identify, label, score."};
  app.name("bnpipe");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file with one [section] per subcommand; command-line flags override it (default: none)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.option_defaults()->always_capture_default();

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Label CSVs -> sampled trial x time tensor, 9:1 split, class report");
  prepare->add_option("--labels", prep.labels, "Label CSV ('second,label' or 'trial,second,label'); repeatable")
      ->required()
      ->check(CLI::ExistingFile);
  prepare->add_option("--out", prep.out, "Output prefix: <out>.train.coo, <out>.test.coo, <out>.dist.txt")->required();
  prepare->add_option("--zero-ratio", prep.zero_ratio, "Zero entries kept per fear entry (ceil(ratio * ones))")
      ->check(CLI::NonNegativeNumber);
  prepare->add_option("--train-fraction", prep.train_fraction, "Share of sampled entries in the training set");
  prepare->add_option("--seed", prep.seed, "Seed for zero sampling; the split uses a stream derived from it");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a CP or NeAT model (single or coupled) to COO tensors");
  fit_cmd->add_option("--model", fit.model, "Model family")
      ->check(CLI::IsMember({"cpd", "coupled-cpd", "neat", "coupled-neat"}));
  fit_cmd->add_option("--x", fit.x, "Training tensor X (COO)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--y", fit.y, "Training tensor Y (COO); required for coupled models (default: none)")->check(kOptionalFile);
  fit_cmd->add_option("--out", fit.out, "Output prefix: <out>.model.json, <out>.report.json[, <out>.factors.csv]")
      ->required();
  fit_cmd->add_option("--rank", fit.config.rank, "Number of components R");
  fit_cmd->add_option("--lr", fit.config.learning_rate, "Adam learning rate");
  fit_cmd->add_option("--epochs", fit.config.epochs, "Maximum number of epochs");
  fit_cmd->add_option("--batch-size", fit.config.batch_size, "Mini-batch size (X entries per step)");
  fit_cmd->add_option("--seed", fit.config.seed, "Seed for initialization and shuffling");
  fit_cmd->add_option("--coupling-weight", fit.config.coupling_weight, "Weight of the Y loss term (coupled models)");
  fit_cmd->add_option("--patience", fit.config.early_stop_patience,
                      "Epochs without improvement before stopping; <= 0 disables early stopping");
  fit_cmd->add_option("--delta", fit.config.early_stop_delta, "Minimum RMSE improvement that resets patience");
  fit_cmd->add_option("--nonneg", fit.nonneg, "Non-negativity map for factors and CP weights")
      ->check(CLI::IsMember({"softplus", "relu"}));
  fit_cmd->add_option("--hidden", fit.config.head_hidden,
                      "NeAT hidden layer widths, comma separated; empty means one affine layer")
      ->delimiter(',');

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Test RMSE of a saved model on COO tensors");
  eval->add_option("--model-file", ev.model_file, "Model written by 'fit'")->required()->check(CLI::ExistingFile);
  eval->add_option("--x", ev.x, "Test tensor X (COO)")->required()->check(CLI::ExistingFile);
  eval->add_option("--y", ev.y, "Test tensor Y (COO); coupled models only (default: none)")->check(kOptionalFile);
  eval->add_option("--out", ev.out, "Output prefix for <out>.eval.txt (default: none, stdout only)");

  ComponentsArgs comp;
  auto* components = app.add_subcommand("components", "Per-component scores and shared/specific tags");
  components->add_option("--model-file", comp.model_file, "Model written by 'fit'")
      ->required()
      ->check(CLI::ExistingFile);
  components->add_option("--threshold", comp.threshold, "Active when score / max score >= threshold")
      ->check(CLI::Range(0.0, 1.0));
  components->add_option("--out", comp.out, "Output prefix for <out>.components.csv (default: none, stdout)");

  LabelArgs lab;
  auto* label = app.add_subcommand("label", "Label a trial chunk by chunk with an in-context labeler");
  label->add_option("--chunks", lab.chunks, "Chunk manifest ('second,media' or 'trial,second,media')")
      ->required()
      ->check(CLI::ExistingFile);
  label->add_option("--examples", lab.examples, "Example manifest 'media,label' (default: none, no examples)")
      ->check(kOptionalFile);
  label->add_option("--mode", lab.mode, "Context mode")
      ->check(CLI::IsMember({"no_icl", "icl", "temporal_icl", "ar_icl"}));
  label->add_option("--labeler", lab.labeler, "scripted:<label csv>, hash:<seed> or cmd:<shell command>")
      ->required();
  label->add_flag("--no-next", lab.no_next, "Omit the unlabeled next chunk in ar_icl mode (default: off)");
  label->add_option("--gold", lab.gold, "Gold label CSV; when given, writes <out>.metrics.txt (default: none)")
      ->check(kOptionalFile);
  label->add_option("--out", lab.out, "Output prefix: <out>.pred.csv, <out>.trace.jsonl")->required();

  MetricsArgs met;
  auto* metrics = app.add_subcommand("metrics", "Macro F1, balanced accuracy, MCC and per-class scores");
  metrics->add_option("--gold", met.gold, "Gold label CSV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--pred", met.pred, "Predicted label CSV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", met.out, "Output prefix for <out>.metrics.txt (default: none, stdout only)");

  KappaArgs kap;
  auto* kappa = app.add_subcommand("kappa", "Quadratic-weighted Cohen's kappa over 1..5 scores");
  kappa->add_option("--scores", kap.scores, "CSV 'expert,model' of integer scores")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) run_prepare(prep, *prepare);
    if (*fit_cmd) run_fit(fit, *fit_cmd);
    if (*eval) run_eval(ev, *eval);
    if (*components) run_components(comp, *components);
    if (*label) run_label(lab, *label);
    if (*metrics) run_metrics(met, *metrics);
    if (*kappa) run_kappa(kap);
  } catch (const Error& e) {
    std::cerr << "bnpipe: error: " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "bnpipe: error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
