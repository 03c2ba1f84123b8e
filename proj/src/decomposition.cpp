#include "bnpipe/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cp_kernel.hpp"
#include "fit_engine.hpp"

namespace bnpipe {

namespace {

constexpr double kInitStddev = 0.5;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal(0.0, kInitStddev);
  return m;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, kInitStddev);
  return v;
}

CpModel init_cp_from(Rng& rng, const std::vector<std::size_t>& shape, const TrainConfig& config) {
  CpModel model;
  model.nonneg = config.nonneg;
  for (auto d : shape) model.factors.push_back(random_matrix(rng, d, config.rank));
  model.weights = random_vector(rng, config.rank);
  return model;
}

CoupledCpModel init_coupled_from(Rng& main, Rng& aux, const std::vector<std::size_t>& x_shape,
                                 const std::vector<std::size_t>& y_shape, const TrainConfig& config) {
  CoupledCpModel model;
  model.nonneg = config.nonneg;
  model.trial = random_matrix(main, x_shape[0], config.rank);
  model.time = random_matrix(main, x_shape[1], config.rank);
  model.neuron = random_matrix(main, x_shape[2], config.rank);
  model.weights_x = random_vector(main, config.rank);
  if (y_shape.size() == 3) model.behavior = random_matrix(aux, y_shape[2], config.rank);
  model.weights_y = random_vector(aux, config.rank);
  return model;
}

void check_model_fits(const std::vector<std::size_t>& model_shape, const SparseTensor& tensor) {
  if (model_shape != tensor.shape()) throw Error(ErrorCode::ShapeMismatch, "model shape differs from tensor shape");
}

}  // namespace

void check_config(const TrainConfig& config) {
  if (config.rank < 1) throw Error(ErrorCode::ConfigError, "rank must be >= 1");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error(ErrorCode::ConfigError, "learning_rate must be > 0");
  }
  if (config.epochs < 1) throw Error(ErrorCode::ConfigError, "epochs must be >= 1");
  if (config.batch_size < 1) throw Error(ErrorCode::ConfigError, "batch_size must be >= 1");
  if (!(config.coupling_weight >= 0.0) || !std::isfinite(config.coupling_weight)) {
    throw Error(ErrorCode::ConfigError, "coupling_weight must be >= 0");
  }
  if (!(config.early_stop_delta >= 0.0)) throw Error(ErrorCode::ConfigError, "early_stop_delta must be >= 0");
  for (auto w : config.head_hidden) {
    if (w < 1) throw Error(ErrorCode::ConfigError, "hidden layer widths must be >= 1");
  }
}

void check_coupled_shapes(const SparseTensor& x, const SparseTensor& y) {
  if (x.modes() != 3) throw Error(ErrorCode::ShapeMismatch, "X must have three modes (trial, time, neuron)");
  if (y.dim(0) != x.dim(0) || y.dim(1) != x.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "X and Y must share trial and time mode sizes (X " +
                                              std::to_string(x.dim(0)) + "x" + std::to_string(x.dim(1)) + ", Y " +
                                              std::to_string(y.dim(0)) + "x" + std::to_string(y.dim(1)) + ")");
  }
}

CpModel init_cp(const std::vector<std::size_t>& shape, const TrainConfig& config) {
  Rng rng(config.seed);
  return init_cp_from(rng, shape, config);
}

double cp_loss(const CpModel& model, const SparseTensor& tensor) {
  check_layout(model);
  check_model_fits(model.shape(), tensor);
  return detail::loss_and_gradient<detail::CpKernel>(model, tensor, nullptr, 0.0, static_cast<CpModel*>(nullptr));
}

double cp_loss_gradient(const CpModel& model, const SparseTensor& tensor, CpModel& grad) {
  check_layout(model);
  check_model_fits(model.shape(), tensor);
  return detail::loss_and_gradient<detail::CpKernel>(model, tensor, nullptr, 0.0, &grad);
}

FitResult<CpModel> fit_cp(const SparseTensor& tensor, const TrainConfig& config,
                          const std::optional<CpModel>& warm_start) {
  check_config(config);
  require_valid(tensor);
  Rng rng(config.seed);
  CpModel model;
  if (warm_start) {
    model = *warm_start;
    check_layout(model);
    check_model_fits(model.shape(), tensor);
  } else {
    model = init_cp_from(rng, tensor.shape(), config);
  }
  auto report = detail::run_fit<CpModel, detail::CpKernel>(model, tensor, nullptr, config, rng, nullptr);
  return {std::move(model), std::move(report)};
}

double coupled_cp_loss(const CoupledCpModel& model, const SparseTensor& x, const SparseTensor& y,
                       double coupling_weight) {
  check_layout(model);
  check_model_fits(model.x_shape(), x);
  check_model_fits(model.y_shape(), y);
  return detail::loss_and_gradient<detail::CoupledCpKernel>(model, x, &y, coupling_weight,
                                                            static_cast<CoupledCpModel*>(nullptr));
}

double coupled_cp_loss_gradient(const CoupledCpModel& model, const SparseTensor& x, const SparseTensor& y,
                                double coupling_weight, CoupledCpModel& grad) {
  check_layout(model);
  check_model_fits(model.x_shape(), x);
  check_model_fits(model.y_shape(), y);
  return detail::loss_and_gradient<detail::CoupledCpKernel>(model, x, &y, coupling_weight, &grad);
}

CoupledCpModel init_coupled_cp(const std::vector<std::size_t>& x_shape, const std::vector<std::size_t>& y_shape,
                               const TrainConfig& config) {
  Rng main(config.seed);
  Rng aux(Rng::derive(config.seed, detail::kAuxStream));
  return init_coupled_from(main, aux, x_shape, y_shape, config);
}

FitResult<CoupledCpModel> fit_coupled_cp(const SparseTensor& x, const SparseTensor& y, const TrainConfig& config) {
  check_config(config);
  check_coupled_shapes(x, y);
  require_valid(x);
  require_valid(y);
  Rng main(config.seed);
  Rng aux(Rng::derive(config.seed, detail::kAuxStream));
  auto model = init_coupled_from(main, aux, x.shape(), y.shape(), config);
  auto report = detail::run_fit<CoupledCpModel, detail::CoupledCpKernel>(model, x, &y, config, main, &aux);
  return {std::move(model), std::move(report)};
}

std::vector<ComponentWeight> rank_components(const CoupledCpModel& model) {
  std::vector<ComponentWeight> out;
  for (std::size_t r = 0; r < model.rank(); ++r) {
    out.push_back({r, phi(model.nonneg, model.weights_x[r]), phi(model.nonneg, model.weights_y[r])});
  }
  std::stable_sort(out.begin(), out.end(), [](const ComponentWeight& a, const ComponentWeight& b) {
    return a.weight_x + a.weight_y > b.weight_x + b.weight_y;
  });
  return out;
}

namespace {

void write_matrix(std::ostream& out, const std::string& mode, const Matrix& raw, NonnegMap map) {
  for (std::size_t i = 0; i < raw.rows; ++i) {
    for (std::size_t r = 0; r < raw.cols; ++r) {
      out << mode << ',' << i << ',' << r << ',' << format_double(phi(map, raw(i, r))) << '\n';
    }
  }
}

void write_weights(std::ostream& out, const std::string& mode, const std::vector<double>& raw, NonnegMap map) {
  for (std::size_t r = 0; r < raw.size(); ++r) out << mode << ",0," << r << ',' << format_double(phi(map, raw[r])) << '\n';
}

}  // namespace

void write_factors_csv(std::ostream& out, const CpModel& model) {
  out << "mode,row,component,value\n";
  for (std::size_t m = 0; m < model.modes(); ++m) write_matrix(out, std::to_string(m), model.factors[m], model.nonneg);
  write_weights(out, "weights", model.weights, model.nonneg);
}

void write_factors_csv(std::ostream& out, const CoupledCpModel& model) {
  out << "mode,row,component,value\n";
  write_matrix(out, "trial", model.trial, model.nonneg);
  write_matrix(out, "time", model.time, model.nonneg);
  write_matrix(out, "neuron", model.neuron, model.nonneg);
  if (model.behavior) write_matrix(out, "behavior", *model.behavior, model.nonneg);
  write_weights(out, "weights_x", model.weights_x, model.nonneg);
  write_weights(out, "weights_y", model.weights_y, model.nonneg);
}

}  // namespace bnpipe
