#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bnpipe/data_prep.hpp"
#include "bnpipe/model_io.hpp"
#include "bnpipe/tensor.hpp"

#ifndef BNPIPE_BIN
#error "BNPIPE_BIN must name the bnpipe executable"
#endif

namespace bnpipe {
namespace {

namespace fs = std::filesystem;

struct Run {
  int status;
  std::string output;
};

/// Runs the tool with `args` (shell syntax), capturing stdout and stderr.
Run bnpipe(const std::string& args) {
  const std::string cmd = std::string("'") + BNPIPE_BIN + "' " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  std::string out;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::path(::testing::TempDir()) / (std::string("bnpipe_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Two trials of 30 seconds with a fear episode in each.
  std::string write_labels() const {
    std::string csv = "trial,second,label\n";
    for (const std::string trial : {"t1", "t2"}) {
      for (int s = 0; s < 30; ++s) {
        const char* label = s >= 10 && s < 16 ? "freezing" : (trial == "t2" && s == 20 ? "fleeing" : "exploring");
        csv += trial + "," + std::to_string(s) + "," + label + "\n";
      }
    }
    spit(path("labels.csv"), csv);
    return path("labels.csv");
  }

  fs::path dir_;
};

TEST_F(Cli, HelpDocumentsEveryFlagAndDefault) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"prepare", {"--labels", "--out", "--zero-ratio", "--train-fraction", "--seed"}},
      {"fit",
       {"--model", "--x", "--y", "--out", "--rank", "--lr", "--epochs", "--batch-size", "--seed", "--coupling-weight",
        "--patience", "--delta", "--nonneg", "--hidden"}},
      {"eval", {"--model-file", "--x", "--y", "--out"}},
      {"components", {"--model-file", "--threshold", "--out"}},
      {"label", {"--chunks", "--examples", "--mode", "--labeler", "--no-next", "--gold", "--out"}},
      {"metrics", {"--gold", "--pred", "--out"}},
      {"kappa", {"--scores"}},
  };
  const auto top = bnpipe("--help");
  EXPECT_EQ(top.status, 0);
  for (const auto& [sub, names] : flags) {
    EXPECT_NE(top.output.find(sub), std::string::npos) << sub;
    const auto help = bnpipe(sub + " --help");
    EXPECT_EQ(help.status, 0) << sub;
    for (const auto& f : names) EXPECT_NE(help.output.find("  " + f + " "), std::string::npos) << sub << " " << f;
    // every option line states a default, REQUIRED, or the absence of a default
    std::istringstream lines(help.output);
    std::string line;
    std::vector<std::string> all;
    while (std::getline(lines, line)) all.push_back(line);
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i].rfind("  --", 0) != 0 || all[i].find("--help") != std::string::npos) continue;
      const std::string both = all[i] + (i + 1 < all.size() ? all[i + 1] : "");
      const bool documented = both.find('[') != std::string::npos || both.find("REQUIRED") != std::string::npos ||
                              both.find("(default:") != std::string::npos;
      EXPECT_TRUE(documented) << sub << ": " << all[i];
    }
  }
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(bnpipe("").status, 1);
  EXPECT_EQ(bnpipe("prepare").status, 1);
  EXPECT_EQ(bnpipe("fit --x /nonexistent.coo --out x").status, 1);
  spit(path("bad.ini"), "[prepare]\nno-such-key = 1\n");
  EXPECT_EQ(bnpipe("--config " + path("bad.ini") + " prepare --labels " + write_labels() + " --out " + path("p")).status, 1);
}

TEST_F(Cli, PrepareCountsAndDeterminism) {
  const auto labels = write_labels();
  const auto a = bnpipe("prepare --labels " + labels + " --out " + path("a") + " --seed 3");
  ASSERT_EQ(a.status, 0) << a.output;
  const auto b = bnpipe("prepare --labels " + labels + " --out " + path("b") + " --seed 3");
  ASSERT_EQ(b.status, 0) << b.output;
  for (const char* ext : {".train.coo", ".test.coo", ".dist.txt"}) {
    EXPECT_EQ(slurp(path(std::string("a") + ext)), slurp(path(std::string("b") + ext))) << ext;
  }
  const auto train = read_coo_file(path("a.train.coo"));
  const auto test = read_coo_file(path("a.test.coo"));
  // 13 fear seconds and ceil(1.0 * 13) sampled zeros
  const std::size_t n = train.size() + test.size();
  EXPECT_EQ(n, 26u);
  EXPECT_EQ(train.size(), static_cast<std::size_t>(std::nearbyint(0.9 * 26)));
  std::size_t ones = 0;
  for (const auto* t : {&train, &test}) {
    for (const auto& e : t->entries()) ones += e.value == 1.0;
  }
  EXPECT_EQ(ones, 13u);
  EXPECT_EQ(train.shape(), (std::vector<std::size_t>{2, 30}));
  EXPECT_NE(slurp(path("a.dist.txt")).find("freezing"), std::string::npos);
}

TEST_F(Cli, PrepareZeroRatioKeepsOnlyFear) {
  const auto r = bnpipe("prepare --labels " + write_labels() + " --out " + path("z") + " --zero-ratio 0");
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* ext : {".train.coo", ".test.coo"}) {
    for (const auto& e : read_coo_file(path(std::string("z") + ext)).entries()) EXPECT_EQ(e.value, 1.0);
  }
}

TEST_F(Cli, ResolvedConfigReproducesTheRun) {
  const auto labels = write_labels();
  ASSERT_EQ(bnpipe("prepare --labels " + labels + " --out " + path("a") + " --seed 9 --zero-ratio 2").status, 0);
  const auto resolved = slurp(path("a.config.resolved"));
  EXPECT_NE(resolved.find("[prepare]"), std::string::npos) << resolved;
  EXPECT_NE(resolved.find("seed=9"), std::string::npos) << resolved;
  EXPECT_NE(resolved.find("train-fraction=0.9"), std::string::npos) << resolved;
  const auto r = bnpipe("--config " + path("a.config.resolved") + " prepare --out " + path("b"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(path("a.train.coo")), slurp(path("b.train.coo")));
  EXPECT_EQ(slurp(path("a.test.coo")), slurp(path("b.test.coo")));
}

TEST_F(Cli, FitThenEvalIsBitStable) {
  ASSERT_EQ(bnpipe("prepare --labels " + write_labels() + " --out " + path("d")).status, 0);
  const auto fit = bnpipe("fit --model cpd --x " + path("d.train.coo") + " --out " + path("m") +
                          " --rank 2 --epochs 200 --lr 0.05 --nonneg relu");
  ASSERT_EQ(fit.status, 0) << fit.output;
  const auto report = nlohmann::json::parse(slurp(path("m.report.json")));
  const auto& history = report["history"];
  ASSERT_GE(history.size(), 2u);
  EXPECT_LT(history.back()["train_rmse"].get<double>(), history.front()["train_rmse"].get<double>());
  EXPECT_TRUE(fs::exists(path("m.factors.csv")));

  const auto eval = bnpipe("eval --model-file " + path("m.model.json") + " --x " + path("d.test.coo") + " --out " + path("e"));
  ASSERT_EQ(eval.status, 0) << eval.output;
  const auto model = read_model_file(path("m.model.json"));
  const auto expected = evaluate_model(model, read_coo_file(path("d.test.coo")));
  EXPECT_EQ(eval.output, "rmse_x=" + format_double(expected.rmse_x) + "\n");
  EXPECT_EQ(slurp(path("e.eval.txt")), eval.output);
}

TEST_F(Cli, CoupledFitWithMismatchedTrialsExitsTwo) {
  spit(path("x.coo"), "dims 2 3 2\n0 0 0 1\n1 2 1 0.5\n");
  spit(path("y.coo"), "dims 3 3\n0 0 1\n2 1 0\n");
  const auto r = bnpipe("fit --model coupled-cpd --x " + path("x.coo") + " --y " + path("y.coo") + " --out " + path("m"));
  EXPECT_EQ(r.status, 2) << r.output;
  EXPECT_NE(r.output.find("ShapeMismatch"), std::string::npos) << r.output;
  const auto missing_y = bnpipe("fit --model coupled-cpd --x " + path("x.coo") + " --out " + path("m"));
  EXPECT_EQ(missing_y.status, 1) << missing_y.output;
}

TEST_F(Cli, NeatThenComponentsHasOneRowPerComponent) {
  spit(path("x.coo"), "dims 3 3 2\n0 0 0 1\n1 2 1 0.5\n2 1 0 0.25\n0 2 1 2\n");
  spit(path("y.coo"), "dims 3 3\n0 0 1\n2 1 0\n1 1 1\n");
  for (const std::string kind : {"neat", "coupled-neat"}) {
    const std::string y = kind == "neat" ? "" : " --y " + path("y.coo");
    const auto fit = bnpipe("fit --model " + kind + " --x " + path("x.coo") + y + " --out " + path(kind) +
                            " --rank 3 --epochs 20");
    ASSERT_EQ(fit.status, 0) << fit.output;
    const auto comp = bnpipe("components --model-file " + path(kind + ".model.json") + " --out " + path(kind + "c"));
    ASSERT_EQ(comp.status, 0) << comp.output;
    const auto csv = slurp(path(kind + "c.components.csv"));
    EXPECT_EQ(line_count(csv), 4u) << csv;
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "component,score_x,score_y,tag");
  }
}

TEST_F(Cli, LabelTenChunksProducesCausalTrace) {
  std::string manifest = "second,media\n";
  for (int s = 0; s < 10; ++s) manifest += std::to_string(s) + ",clip" + std::to_string(s) + ".mp4\n";
  spit(path("chunks.csv"), manifest);
  spit(path("examples.csv"), "media,label\nf.mp4,freezing\nl.mp4,fleeing\ne.mp4,exploring\n");
  const auto r = bnpipe("label --chunks " + path("chunks.csv") + " --examples " + path("examples.csv") +
                        " --labeler hash:4 --out " + path("run"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto pred = slurp(path("run.pred.csv"));
  EXPECT_EQ(line_count(pred), 11u);
  EXPECT_EQ(pred.substr(0, pred.find('\n')), "second,label");

  std::istringstream trace(slurp(path("run.trace.jsonl")));
  std::string line;
  std::vector<nlohmann::json> steps;
  while (std::getline(trace, line)) steps.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(steps.size(), 10u);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& ctx = steps[t]["context"];
    EXPECT_EQ(ctx["target"]["second"], t);
    EXPECT_EQ(ctx["examples"].size(), 3u);
    EXPECT_EQ(ctx.contains("prev"), t > 0);
    if (t > 0) {
      EXPECT_EQ(ctx["prev"]["second"], t - 1);
      EXPECT_EQ(ctx["prev"]["label"], steps[t - 1]["decision"]["label"]);
    }
    EXPECT_EQ(ctx.contains("next"), t + 1 < steps.size());
    if (t + 1 < steps.size()) {
      EXPECT_EQ(ctx["next"]["second"], t + 1);
    }
  }
}

TEST_F(Cli, LabelWithGoldWritesMetrics) {
  spit(path("chunks.csv"), "second,media\n0,a\n1,b\n2,c\n");
  spit(path("gold.csv"), "second,label\n0,freezing\n1,fleeing\n2,exploring\n");
  const auto r = bnpipe("label --chunks " + path("chunks.csv") + " --labeler scripted:" + path("gold.csv") + " --mode icl --gold " +
                        path("gold.csv") + " --out " + path("run"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(slurp(path("run.metrics.txt")).find("macro_f1=1"), std::string::npos);
  const auto m = bnpipe("metrics --gold " + path("gold.csv") + " --pred " + path("run.pred.csv"));
  EXPECT_EQ(m.status, 0) << m.output;
  EXPECT_NE(m.output.find("mcc=1"), std::string::npos) << m.output;
}

TEST_F(Cli, EmptyManifestExitsTwo) {
  spit(path("chunks.csv"), "");
  const auto r = bnpipe("label --chunks " + path("chunks.csv") + " --labeler hash:0 --out " + path("run"));
  EXPECT_EQ(r.status, 2) << r.output;
  EXPECT_NE(r.output.find("ManifestError"), std::string::npos) << r.output;
}

TEST_F(Cli, GarbageLabelerFailsAtFirstStep) {
  spit(path("chunks.csv"), "second,media\n0,a\n1,b\n");
  const auto r = bnpipe("label --chunks " + path("chunks.csv") + " --labeler 'cmd:echo garbage' --out " + path("run"));
  EXPECT_EQ(r.status, 3) << r.output;
  EXPECT_NE(r.output.find("LabelerFailure"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("t=0"), std::string::npos) << r.output;
}

TEST_F(Cli, KappaOnPublishedPairs) {
  spit(path("scores.csv"), "expert,model\n5,4\n5,4\n3,3\n1,4\n1,1\n1,2\n2,3\n4,3\n4,4\n3,3\n3,3\n1,2\n");
  const auto r = bnpipe("kappa --scores " + path("scores.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("pairs=12"), std::string::npos);
  const auto pos = r.output.find("kappa=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(r.output.substr(pos + 6)), 22.0 / 37.0, 1e-12);
}

}  // namespace
}  // namespace bnpipe
