#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnpipe/data_prep.hpp"

namespace bnpipe {

/// counts[i][j] = items whose truth is classes[i] and prediction is classes[j].
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;

  std::size_t size() const { return classes.size(); }
  std::uint64_t total() const;
  std::size_t class_index(const std::string& name) const;  // UnknownClass if absent

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Class order is first appearance in truth, then in pred.
ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred);
ConfusionMatrix confusion(std::span<const BehaviorLabel> truth, std::span<const BehaviorLabel> pred);

struct ClassScores {
  double precision;
  double recall;
  double f_beta;
};

/// Any 0/0 evaluates to 0.
ClassScores fbeta(const ConfusionMatrix& cm, const std::string& cls, double beta);

double macro_f1(const ConfusionMatrix& cm);
/// Mean recall over classes with at least one true instance.
double balanced_accuracy(const ConfusionMatrix& cm);
/// Multiclass Matthews correlation (Gorodkin's R_K); 0 when the denominator vanishes.
double mcc(const ConfusionMatrix& cm);

struct ScorePair {
  int expert;
  int model;
};

/// Quadratic-weighted Cohen's kappa over the fixed 1..5 category set.
double quadratic_weighted_kappa(std::span<const ScorePair> pairs);

struct MatrixScore {
  double f1;
  double accuracy;
};

/// Binary F1 (active = positive) and cellwise accuracy.
MatrixScore matrix_score(const GridActivity& truth, const GridActivity& pred);

struct PerClassReport {
  std::string cls;
  std::uint64_t support;
  double precision;
  double recall;
  double f1;
  double f2;
};

struct MetricsReport {
  double macro_f1;
  double balanced_accuracy;
  double mcc;
  std::vector<PerClassReport> per_class;
  ConfusionMatrix confusion;
};

MetricsReport classification_report(const ConfusionMatrix& cm);

/// Aligned text table followed by `key=value` lines.
void write_report(std::ostream& out, const MetricsReport& report);

/// CSV `expert,model` with integer scores 1..5.
std::vector<ScorePair> read_score_csv(std::istream& in);

}  // namespace bnpipe
