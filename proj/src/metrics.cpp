#include "bnpipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <unordered_map>

#include "csv.hpp"

namespace bnpipe {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

constexpr int kMinScore = 1;
constexpr int kMaxScore = 5;

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

std::size_t ConfusionMatrix::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw Error(ErrorCode::UnknownClass, "class '" + name + "' not in confusion matrix");
  return static_cast<std::size_t>(it - classes.begin());
}

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "truth has " + std::to_string(truth.size()) + " items, pred has " + std::to_string(pred.size()));
  }
  if (truth.empty()) throw Error(ErrorCode::Empty, "no items to tabulate");
  ConfusionMatrix cm;
  std::unordered_map<std::string, std::size_t> slot;
  auto intern = [&](const std::string& c) {
    auto [it, inserted] = slot.try_emplace(c, cm.classes.size());
    if (inserted) cm.classes.push_back(c);
    return it->second;
  };
  for (const auto& t : truth) intern(t);
  for (const auto& p : pred) intern(p);
  cm.counts.assign(cm.classes.size(), std::vector<std::uint64_t>(cm.classes.size(), 0));
  for (std::size_t n = 0; n < truth.size(); ++n) ++cm.counts[slot[truth[n]]][slot[pred[n]]];
  return cm;
}

ConfusionMatrix confusion(std::span<const BehaviorLabel> truth, std::span<const BehaviorLabel> pred) {
  std::vector<std::string> t;
  std::vector<std::string> p;
  for (auto l : truth) t.emplace_back(to_string(l));
  for (auto l : pred) p.emplace_back(to_string(l));
  return confusion(t, p);
}

ClassScores fbeta(const ConfusionMatrix& cm, const std::string& cls, double beta) {
  const auto k = cm.class_index(cls);
  const auto tp = static_cast<double>(cm.counts[k][k]);
  double predicted = 0.0;
  double actual = 0.0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    predicted += static_cast<double>(cm.counts[i][k]);
    actual += static_cast<double>(cm.counts[k][i]);
  }
  const double p = ratio(tp, predicted);
  const double r = ratio(tp, actual);
  const double b2 = beta * beta;
  return {p, r, ratio((1.0 + b2) * p * r, b2 * p + r)};
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.size() == 0 || cm.total() == 0) throw Error(ErrorCode::Empty, "empty confusion matrix");
  double sum = 0.0;
  for (const auto& c : cm.classes) sum += fbeta(cm, c, 1.0).f_beta;
  return sum / static_cast<double>(cm.size());
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  if (cm.size() == 0 || cm.total() == 0) throw Error(ErrorCode::Empty, "empty confusion matrix");
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    std::uint64_t actual = 0;
    for (auto c : cm.counts[k]) actual += c;
    if (actual == 0) continue;
    sum += static_cast<double>(cm.counts[k][k]) / static_cast<double>(actual);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double mcc(const ConfusionMatrix& cm) {
  if (cm.size() == 0 || cm.total() == 0) throw Error(ErrorCode::Empty, "empty confusion matrix");
  const std::size_t k = cm.size();
  double correct = 0.0;
  double total = 0.0;
  std::vector<double> predicted(k, 0.0);
  std::vector<double> actual(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = static_cast<double>(cm.counts[i][j]);
      actual[i] += c;
      predicted[j] += c;
      total += c;
    }
    correct += static_cast<double>(cm.counts[i][i]);
  }
  double pt = 0.0;
  double pp = 0.0;
  double tt = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    pt += predicted[i] * actual[i];
    pp += predicted[i] * predicted[i];
    tt += actual[i] * actual[i];
  }
  const double den = std::sqrt((total * total - pp) * (total * total - tt));
  return den == 0.0 ? 0.0 : (correct * total - pt) / den;
}

double quadratic_weighted_kappa(std::span<const ScorePair> pairs) {
  if (pairs.size() < 2) throw Error(ErrorCode::TooFewPairs, "kappa needs at least 2 score pairs");
  constexpr int n = kMaxScore - kMinScore + 1;
  double observed[n][n] = {};
  double row[n] = {};
  double col[n] = {};
  for (const auto& p : pairs) {
    if (p.expert < kMinScore || p.expert > kMaxScore || p.model < kMinScore || p.model > kMaxScore) {
      throw Error(ErrorCode::ParseError, "scores must lie in 1..5");
    }
    const int i = p.expert - kMinScore;
    const int j = p.model - kMinScore;
    observed[i][j] += 1.0;
    row[i] += 1.0;
    col[j] += 1.0;
  }
  const auto total = static_cast<double>(pairs.size());
  const double scale = static_cast<double>((n - 1) * (n - 1));
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / scale;
      num += w * observed[i][j];
      den += w * row[i] * col[j] / total;
    }
  }
  if (den == 0.0) throw Error(ErrorCode::DegenerateMarginals, "expected disagreement is zero");
  return 1.0 - num / den;
}

MatrixScore matrix_score(const GridActivity& truth, const GridActivity& pred) {
  if (truth.n != pred.n || truth.cells.size() != pred.cells.size()) {
    throw Error(ErrorCode::ShapeMismatch, "grid sides differ");
  }
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double agree = 0.0;
  for (std::size_t i = 0; i < truth.cells.size(); ++i) {
    const bool t = truth.cells[i] != 0;
    const bool p = pred.cells[i] != 0;
    tp += (t && p) ? 1.0 : 0.0;
    fp += (!t && p) ? 1.0 : 0.0;
    fn += (t && !p) ? 1.0 : 0.0;
    agree += (t == p) ? 1.0 : 0.0;
  }
  const double precision = ratio(tp, tp + fp);
  const double recall = ratio(tp, tp + fn);
  return {ratio(2.0 * precision * recall, precision + recall), ratio(agree, static_cast<double>(truth.cells.size()))};
}

MetricsReport classification_report(const ConfusionMatrix& cm) {
  MetricsReport report{macro_f1(cm), balanced_accuracy(cm), mcc(cm), {}, cm};
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto& c = cm.classes[k];
    std::uint64_t support = 0;
    for (auto v : cm.counts[k]) support += v;
    const auto f1 = fbeta(cm, c, 1.0);
    const auto f2 = fbeta(cm, c, 2.0);
    report.per_class.push_back({c, support, f1.precision, f1.recall, f1.f_beta, f2.f_beta});
  }
  return report;
}

void write_report(std::ostream& out, const MetricsReport& report) {
  const auto flags = out.flags();
  out << std::left << std::setw(12) << "class" << std::right << std::setw(9) << "support" << std::setw(11)
      << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(9) << "f2" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& c : report.per_class) {
    out << std::left << std::setw(12) << c.cls << std::right << std::setw(9) << c.support << std::setw(11)
        << c.precision << std::setw(9) << c.recall << std::setw(9) << c.f1 << std::setw(9) << c.f2 << '\n';
  }
  out << '\n'
      << "macro F1           " << report.macro_f1 << '\n'
      << "balanced accuracy  " << report.balanced_accuracy << '\n'
      << "MCC                " << report.mcc << '\n'
      << '\n';
  out.flags(flags);
  out << "macro_f1=" << format_double(report.macro_f1) << '\n';
  out << "balanced_accuracy=" << format_double(report.balanced_accuracy) << '\n';
  out << "mcc=" << format_double(report.mcc) << '\n';
  for (const auto& c : report.per_class) {
    out << c.cls << ".support=" << c.support << '\n';
    out << c.cls << ".precision=" << format_double(c.precision) << '\n';
    out << c.cls << ".recall=" << format_double(c.recall) << '\n';
    out << c.cls << ".f1=" << format_double(c.f1) << '\n';
    out << c.cls << ".f2=" << format_double(c.f2) << '\n';
  }
}

std::vector<ScorePair> read_score_csv(std::istream& in) {
  detail::CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::ParseError, "score file is empty");
  for (auto& h : f) h = detail::lower(h);
  if (f != std::vector<std::string>{"expert", "model"}) reader.fail(ErrorCode::ParseError, "expected header 'expert,model'");
  std::vector<ScorePair> pairs;
  while (reader.next(f)) {
    ScorePair p{};
    if (f.size() != 2 || !detail::parse_number(f[0], p.expert) || !detail::parse_number(f[1], p.model)) {
      reader.fail(ErrorCode::ParseError, "expected two integer scores");
    }
    if (p.expert < kMinScore || p.expert > kMaxScore || p.model < kMinScore || p.model > kMaxScore) {
      reader.fail(ErrorCode::ParseError, "scores must lie in 1..5");
    }
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace bnpipe
