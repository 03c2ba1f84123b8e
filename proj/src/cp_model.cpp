#include "bnpipe/cp_model.hpp"

namespace bnpipe {

namespace {

Matrix zeros(const Matrix& m) { return Matrix(m.rows, m.cols); }

double cp_sum(std::span<const Matrix* const> factors, std::span<const double> weights, NonnegMap map,
              const Index& index) {
  double total = 0.0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    double term = phi(map, weights[r]);
    for (std::size_t m = 0; m < factors.size(); ++m) term *= phi(map, (*factors[m])(index[m], r));
    total += term;
  }
  return total;
}

void check_index(std::span<const std::size_t> shape, const Index& index) {
  if (!in_bounds(shape, index)) throw Error(ErrorCode::IndexOutOfBounds, "index outside model shape");
}

}  // namespace

std::vector<std::size_t> CpModel::shape() const {
  std::vector<std::size_t> s;
  for (const auto& f : factors) s.push_back(f.rows);
  return s;
}

CpModel CpModel::zeros_like() const {
  CpModel z;
  for (const auto& f : factors) z.factors.push_back(zeros(f));
  z.weights.assign(weights.size(), 0.0);
  z.nonneg = nonneg;
  return z;
}

std::vector<std::span<double>> CpModel::parameters() {
  std::vector<std::span<double>> p;
  for (auto& f : factors) p.emplace_back(f.data);
  p.emplace_back(weights);
  return p;
}

std::vector<std::span<const double>> CpModel::parameters() const {
  std::vector<std::span<const double>> p;
  for (const auto& f : factors) p.emplace_back(f.data);
  p.emplace_back(weights);
  return p;
}

std::vector<std::size_t> CoupledCpModel::x_shape() const { return {trial.rows, time.rows, neuron.rows}; }

std::vector<std::size_t> CoupledCpModel::y_shape() const {
  if (behavior) return {trial.rows, time.rows, behavior->rows};
  return {trial.rows, time.rows};
}

CoupledCpModel CoupledCpModel::zeros_like() const {
  CoupledCpModel z;
  z.trial = zeros(trial);
  z.time = zeros(time);
  z.neuron = zeros(neuron);
  if (behavior) z.behavior = zeros(*behavior);
  z.weights_x.assign(weights_x.size(), 0.0);
  z.weights_y.assign(weights_y.size(), 0.0);
  z.nonneg = nonneg;
  return z;
}

std::vector<std::span<double>> CoupledCpModel::parameters() {
  std::vector<std::span<double>> p{trial.data, time.data, neuron.data};
  if (behavior) p.emplace_back(behavior->data);
  p.emplace_back(weights_x);
  p.emplace_back(weights_y);
  return p;
}

std::vector<std::span<const double>> CoupledCpModel::parameters() const {
  std::vector<std::span<const double>> p{trial.data, time.data, neuron.data};
  if (behavior) p.emplace_back(behavior->data);
  p.emplace_back(weights_x);
  p.emplace_back(weights_y);
  return p;
}

CpModel CoupledCpModel::x_model() const { return CpModel{{trial, time, neuron}, weights_x, nonneg}; }

CpModel CoupledCpModel::y_model() const {
  CpModel m{{trial, time}, weights_y, nonneg};
  if (behavior) m.factors.push_back(*behavior);
  return m;
}

void check_layout(const CpModel& model) {
  if (model.rank() == 0) throw Error(ErrorCode::ShapeMismatch, "rank must be at least 1");
  if (model.modes() < 2 || model.modes() > kMaxModes) {
    throw Error(ErrorCode::ShapeMismatch, "CP model must have 2 or 3 factor matrices");
  }
  for (const auto& f : model.factors) {
    if (f.cols != model.rank()) throw Error(ErrorCode::ShapeMismatch, "factor column count differs from rank");
  }
}

void check_layout(const CoupledCpModel& model) {
  const auto r = model.rank();
  if (r == 0) throw Error(ErrorCode::ShapeMismatch, "rank must be at least 1");
  bool ok = model.weights_y.size() == r && model.trial.cols == r && model.time.cols == r && model.neuron.cols == r;
  if (model.behavior) ok = ok && model.behavior->cols == r;
  if (!ok) throw Error(ErrorCode::ShapeMismatch, "coupled model factors and weights disagree on rank");
}

double reconstruct_cp(const CpModel& model, const Index& index) {
  const auto shape = model.shape();
  check_index(shape, index);
  std::vector<const Matrix*> f;
  for (const auto& m : model.factors) f.push_back(&m);
  return cp_sum(f, model.weights, model.nonneg, index);
}

double reconstruct_x(const CoupledCpModel& model, const Index& index) {
  check_index(model.x_shape(), index);
  const Matrix* f[] = {&model.trial, &model.time, &model.neuron};
  return cp_sum(f, model.weights_x, model.nonneg, index);
}

double reconstruct_y(const CoupledCpModel& model, const Index& index) {
  check_index(model.y_shape(), index);
  const Matrix* f[] = {&model.trial, &model.time, model.behavior ? &*model.behavior : nullptr};
  return cp_sum(std::span(f, model.behavior ? 3 : 2), model.weights_y, model.nonneg, index);
}

Matrix effective(const Matrix& raw, NonnegMap map) {
  Matrix out(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.data.size(); ++i) out.data[i] = phi(map, raw.data[i]);
  return out;
}

std::vector<double> effective(std::span<const double> raw, NonnegMap map) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = phi(map, raw[i]);
  return out;
}

}  // namespace bnpipe
