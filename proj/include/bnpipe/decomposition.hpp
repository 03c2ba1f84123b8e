#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "bnpipe/cp_model.hpp"
#include "bnpipe/tensor.hpp"

namespace bnpipe {

struct TrainConfig {
  std::size_t rank = 1;
  double learning_rate = 0.01;
  std::size_t epochs = 500;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 0;
  double coupling_weight = 1.0;  // multiplies the Y loss term
  int early_stop_patience = 10;  // <= 0 disables early stopping
  double early_stop_delta = 1e-6;
  NonnegMap nonneg = NonnegMap::Softplus;
  std::vector<std::size_t> head_hidden;  // NeAT only; empty = single affine layer
};

/// Throws ConfigError on out-of-range settings.
void check_config(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch;  // 0 is the initial model
  double train_rmse;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct FitReport {
  double final_train_rmse = 0.0;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
  std::uint64_t seed = 0;
  /// Per-tensor train RMSE after fitting. For coupled fits final_train_rmse
  /// is the pooled RMSE sqrt((SSx + w*SSy) / (Nx + w*Ny)).
  double final_rmse_x = 0.0;
  std::optional<double> final_rmse_y;

  friend bool operator==(const FitReport&, const FitReport&) = default;
};

template <class Model>
struct FitResult {
  Model model;
  FitReport report;
};

/// Raised when the training loss becomes NaN/Inf. Carries the last finite
/// parameters and the history up to that point.
template <class Model>
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(Model last_finite, FitReport report, const std::string& message)
      : Error(ErrorCode::NonFiniteLoss, message), last_finite_(std::move(last_finite)), report_(std::move(report)) {}

  const Model& last_finite() const { return last_finite_; }
  const FitReport& report() const { return report_; }

 private:
  Model last_finite_;
  FitReport report_;
};

/// Seeded initialization: raw parameters ~ Normal(0, 0.5).
CpModel init_cp(const std::vector<std::size_t>& shape, const TrainConfig& config);

/// Sum of squared residuals over the observed entries.
double cp_loss(const CpModel& model, const SparseTensor& tensor);
/// Same loss; writes d loss / d raw parameter into `grad` (resized to match).
double cp_loss_gradient(const CpModel& model, const SparseTensor& tensor, CpModel& grad);

/// Minimizes cp_loss with mini-batch Adam. `warm_start`, when given, replaces
/// the seeded initialization (its shape and rank must match).
FitResult<CpModel> fit_cp(const SparseTensor& tensor, const TrainConfig& config,
                          const std::optional<CpModel>& warm_start = std::nullopt);

/// SSx + coupling_weight * SSy over observed entries.
double coupled_cp_loss(const CoupledCpModel& model, const SparseTensor& x, const SparseTensor& y,
                       double coupling_weight);
double coupled_cp_loss_gradient(const CoupledCpModel& model, const SparseTensor& x, const SparseTensor& y,
                                double coupling_weight, CoupledCpModel& grad);

/// A, B, C and lambda are drawn from the same seeded stream as init_cp on X;
/// D and gamma come from a separate derived stream.
CoupledCpModel init_coupled_cp(const std::vector<std::size_t>& x_shape, const std::vector<std::size_t>& y_shape,
                               const TrainConfig& config);

/// With coupling_weight == 0 the X-side parameters and history are
/// bit-identical to fit_cp(x, config).
FitResult<CoupledCpModel> fit_coupled_cp(const SparseTensor& x, const SparseTensor& y, const TrainConfig& config);

struct ComponentWeight {
  std::size_t component;
  double weight_x;  // phi(lambda_r)
  double weight_y;  // phi(gamma_r)

  friend bool operator==(const ComponentWeight&, const ComponentWeight&) = default;
};

/// Descending by weight_x + weight_y, ties by ascending component.
std::vector<ComponentWeight> rank_components(const CoupledCpModel& model);

/// CSV `mode,row,component,value` with effective (post-map) factor values.
/// Weights are emitted as mode `weights` (and `weights_y`), row 0.
void write_factors_csv(std::ostream& out, const CpModel& model);
void write_factors_csv(std::ostream& out, const CoupledCpModel& model);

/// Throws ShapeMismatch unless X and Y agree on the trial and time modes and
/// X has three modes.
void check_coupled_shapes(const SparseTensor& x, const SparseTensor& y);

}  // namespace bnpipe
