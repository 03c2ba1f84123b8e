#include "bnpipe/neat.hpp"

#include <algorithm>
#include <cmath>

#include "fit_engine.hpp"
#include "neat_kernel.hpp"

namespace bnpipe {

namespace {

constexpr double kFactorInitStddev = 0.5;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal(0.0, kFactorInitStddev);
  return m;
}

ComponentHead random_head(Rng& rng, std::size_t input, std::span<const std::size_t> hidden) {
  auto head = ComponentHead::zeros(input, hidden);
  for (auto& layer : head.layers) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols));
    for (auto& w : layer.weight.data) w = rng.normal(0.0, stddev);
  }
  return head;
}

std::vector<ComponentHead> random_heads(Rng& rng, std::size_t rank, std::size_t input,
                                        std::span<const std::size_t> hidden) {
  std::vector<ComponentHead> heads;
  for (std::size_t r = 0; r < rank; ++r) heads.push_back(random_head(rng, input, hidden));
  return heads;
}

std::vector<ComponentHead> zero_heads(const std::vector<ComponentHead>& heads) {
  std::vector<ComponentHead> out = heads;
  for (auto& h : out) {
    for (auto& l : h.layers) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }
  return out;
}

void append_head_blocks(std::vector<std::span<double>>& out, std::vector<ComponentHead>& heads) {
  for (auto& h : heads) {
    for (auto& l : h.layers) {
      out.emplace_back(l.weight.data);
      out.emplace_back(l.bias);
    }
  }
}

void append_head_blocks(std::vector<std::span<const double>>& out, const std::vector<ComponentHead>& heads) {
  for (const auto& h : heads) {
    for (const auto& l : h.layers) {
      out.emplace_back(l.weight.data);
      out.emplace_back(l.bias);
    }
  }
}

void check_head(const ComponentHead& head, std::size_t input) {
  if (head.layers.empty()) throw Error(ErrorCode::ShapeMismatch, "component head has no layers");
  std::size_t width = input;
  for (const auto& l : head.layers) {
    if (l.weight.cols != width || l.bias.size() != l.weight.rows) {
      throw Error(ErrorCode::ShapeMismatch, "component head layer widths are inconsistent");
    }
    width = l.weight.rows;
  }
  if (width != 1) throw Error(ErrorCode::ShapeMismatch, "component head output width must be 1");
}

double head_sum(const std::vector<ComponentHead>& heads, std::span<const Matrix* const> factors, NonnegMap map,
                const Index& index) {
  double total = 0.0;
  double input[kMaxModes];
  for (std::size_t r = 0; r < heads.size(); ++r) {
    for (std::size_t m = 0; m < factors.size(); ++m) input[m] = phi(map, (*factors[m])(index[m], r));
    total += heads[r].forward(std::span<const double>(input, factors.size()));
  }
  return total;
}

void check_model_fits(const std::vector<std::size_t>& model_shape, const SparseTensor& tensor) {
  if (model_shape != tensor.shape()) throw Error(ErrorCode::ShapeMismatch, "model shape differs from tensor shape");
}

NeatModel init_neat_from(Rng& rng, const std::vector<std::size_t>& shape, const TrainConfig& config) {
  NeatModel model;
  model.nonneg = config.nonneg;
  for (auto d : shape) model.factors.push_back(random_matrix(rng, d, config.rank));
  model.heads = random_heads(rng, config.rank, shape.size(), config.head_hidden);
  return model;
}

CoupledNeatModel init_coupled_from(Rng& main, Rng& aux, const std::vector<std::size_t>& x_shape,
                                   const std::vector<std::size_t>& y_shape, const TrainConfig& config) {
  CoupledNeatModel model;
  model.nonneg = config.nonneg;
  model.trial = random_matrix(main, x_shape[0], config.rank);
  model.time = random_matrix(main, x_shape[1], config.rank);
  model.neuron = random_matrix(main, x_shape[2], config.rank);
  model.heads_x = random_heads(main, config.rank, 3, config.head_hidden);
  if (y_shape.size() == 3) model.behavior = random_matrix(aux, y_shape[2], config.rank);
  model.heads_y = random_heads(aux, config.rank, y_shape.size(), config.head_hidden);
  return model;
}

}  // namespace

double ComponentHead::forward(std::span<const double> input) const {
  std::vector<double> current(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    next.assign(layer.weight.rows, 0.0);
    for (std::size_t o = 0; o < layer.weight.rows; ++o) {
      double s = layer.bias[o];
      const auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * current[i];
      next[o] = (l + 1 < layers.size() && s < 0.0) ? 0.0 : s;
    }
    std::swap(current, next);
  }
  return current.at(0);
}

ComponentHead ComponentHead::zeros(std::size_t input, std::span<const std::size_t> hidden) {
  ComponentHead head;
  std::size_t width = input;
  for (auto h : hidden) {
    head.layers.push_back({Matrix(h, width), std::vector<double>(h, 0.0)});
    width = h;
  }
  head.layers.push_back({Matrix(1, width), std::vector<double>(1, 0.0)});
  return head;
}

std::vector<std::size_t> NeatModel::shape() const {
  std::vector<std::size_t> s;
  for (const auto& f : factors) s.push_back(f.rows);
  return s;
}

NeatModel NeatModel::zeros_like() const {
  NeatModel z;
  for (const auto& f : factors) z.factors.emplace_back(f.rows, f.cols);
  z.heads = zero_heads(heads);
  z.nonneg = nonneg;
  return z;
}

std::vector<std::span<double>> NeatModel::parameters() {
  std::vector<std::span<double>> p;
  for (auto& f : factors) p.emplace_back(f.data);
  append_head_blocks(p, heads);
  return p;
}

std::vector<std::span<const double>> NeatModel::parameters() const {
  std::vector<std::span<const double>> p;
  for (const auto& f : factors) p.emplace_back(f.data);
  append_head_blocks(p, heads);
  return p;
}

std::vector<std::size_t> CoupledNeatModel::x_shape() const { return {trial.rows, time.rows, neuron.rows}; }

std::vector<std::size_t> CoupledNeatModel::y_shape() const {
  if (behavior) return {trial.rows, time.rows, behavior->rows};
  return {trial.rows, time.rows};
}

CoupledNeatModel CoupledNeatModel::zeros_like() const {
  CoupledNeatModel z;
  z.trial = Matrix(trial.rows, trial.cols);
  z.time = Matrix(time.rows, time.cols);
  z.neuron = Matrix(neuron.rows, neuron.cols);
  if (behavior) z.behavior = Matrix(behavior->rows, behavior->cols);
  z.heads_x = zero_heads(heads_x);
  z.heads_y = zero_heads(heads_y);
  z.nonneg = nonneg;
  return z;
}

std::vector<std::span<double>> CoupledNeatModel::parameters() {
  std::vector<std::span<double>> p{trial.data, time.data, neuron.data};
  if (behavior) p.emplace_back(behavior->data);
  append_head_blocks(p, heads_x);
  append_head_blocks(p, heads_y);
  return p;
}

std::vector<std::span<const double>> CoupledNeatModel::parameters() const {
  std::vector<std::span<const double>> p{trial.data, time.data, neuron.data};
  if (behavior) p.emplace_back(behavior->data);
  append_head_blocks(p, heads_x);
  append_head_blocks(p, heads_y);
  return p;
}

void check_layout(const NeatModel& model) {
  const auto r = model.rank();
  if (r == 0) throw Error(ErrorCode::ShapeMismatch, "rank must be at least 1");
  if (model.modes() < 2 || model.modes() > kMaxModes) {
    throw Error(ErrorCode::ShapeMismatch, "NeAT model must have 2 or 3 factor matrices");
  }
  for (const auto& f : model.factors) {
    if (f.cols != r) throw Error(ErrorCode::ShapeMismatch, "factor column count differs from head count");
  }
  for (const auto& h : model.heads) check_head(h, model.modes());
}

void check_layout(const CoupledNeatModel& model) {
  const auto r = model.rank();
  if (r == 0) throw Error(ErrorCode::ShapeMismatch, "rank must be at least 1");
  bool ok = model.heads_y.size() == r && model.trial.cols == r && model.time.cols == r && model.neuron.cols == r;
  if (model.behavior) ok = ok && model.behavior->cols == r;
  if (!ok) throw Error(ErrorCode::ShapeMismatch, "coupled NeAT factors and heads disagree on rank");
  for (const auto& h : model.heads_x) check_head(h, 3);
  for (const auto& h : model.heads_y) check_head(h, model.behavior ? 3 : 2);
}

double neat_predict(const NeatModel& model, const Index& index) {
  if (!in_bounds(model.shape(), index)) throw Error(ErrorCode::IndexOutOfBounds, "index outside model shape");
  std::vector<const Matrix*> f;
  for (const auto& m : model.factors) f.push_back(&m);
  return head_sum(model.heads, f, model.nonneg, index);
}

double neat_predict(const CoupledNeatModel& model, const Index& index, Which which) {
  if (which == Which::X) {
    if (!in_bounds(model.x_shape(), index)) throw Error(ErrorCode::IndexOutOfBounds, "index outside X shape");
    const Matrix* f[] = {&model.trial, &model.time, &model.neuron};
    return head_sum(model.heads_x, f, model.nonneg, index);
  }
  if (!in_bounds(model.y_shape(), index)) throw Error(ErrorCode::IndexOutOfBounds, "index outside Y shape");
  const Matrix* f[] = {&model.trial, &model.time, model.behavior ? &*model.behavior : nullptr};
  return head_sum(model.heads_y, std::span(f, model.behavior ? 3 : 2), model.nonneg, index);
}

NeatModel init_neat(const std::vector<std::size_t>& shape, const TrainConfig& config) {
  Rng rng(config.seed);
  return init_neat_from(rng, shape, config);
}

CoupledNeatModel init_coupled_neat(const std::vector<std::size_t>& x_shape, const std::vector<std::size_t>& y_shape,
                                   const TrainConfig& config) {
  Rng main(config.seed);
  Rng aux(Rng::derive(config.seed, detail::kAuxStream));
  return init_coupled_from(main, aux, x_shape, y_shape, config);
}

double neat_loss(const NeatModel& model, const SparseTensor& tensor) {
  check_layout(model);
  check_model_fits(model.shape(), tensor);
  return detail::loss_and_gradient<detail::NeatKernel>(model, tensor, nullptr, 0.0, static_cast<NeatModel*>(nullptr));
}

double neat_loss_gradient(const NeatModel& model, const SparseTensor& tensor, NeatModel& grad) {
  check_layout(model);
  check_model_fits(model.shape(), tensor);
  return detail::loss_and_gradient<detail::NeatKernel>(model, tensor, nullptr, 0.0, &grad);
}

double coupled_neat_loss(const CoupledNeatModel& model, const SparseTensor& x, const SparseTensor& y,
                         double coupling_weight) {
  check_layout(model);
  check_model_fits(model.x_shape(), x);
  check_model_fits(model.y_shape(), y);
  return detail::loss_and_gradient<detail::CoupledNeatKernel>(model, x, &y, coupling_weight,
                                                              static_cast<CoupledNeatModel*>(nullptr));
}

double coupled_neat_loss_gradient(const CoupledNeatModel& model, const SparseTensor& x, const SparseTensor& y,
                                  double coupling_weight, CoupledNeatModel& grad) {
  check_layout(model);
  check_model_fits(model.x_shape(), x);
  check_model_fits(model.y_shape(), y);
  return detail::loss_and_gradient<detail::CoupledNeatKernel>(model, x, &y, coupling_weight, &grad);
}

FitResult<NeatModel> fit_neat(const SparseTensor& tensor, const TrainConfig& config) {
  check_config(config);
  require_valid(tensor);
  Rng rng(config.seed);
  auto model = init_neat_from(rng, tensor.shape(), config);
  auto report = detail::run_fit<NeatModel, detail::NeatKernel>(model, tensor, nullptr, config, rng, nullptr);
  return {std::move(model), std::move(report)};
}

FitResult<CoupledNeatModel> fit_coupled_neat(const SparseTensor& x, const SparseTensor& y,
                                             const TrainConfig& config) {
  check_config(config);
  check_coupled_shapes(x, y);
  require_valid(x);
  require_valid(y);
  Rng main(config.seed);
  Rng aux(Rng::derive(config.seed, detail::kAuxStream));
  auto model = init_coupled_from(main, aux, x.shape(), y.shape(), config);
  auto report = detail::run_fit<CoupledNeatModel, detail::CoupledNeatKernel>(model, x, &y, config, main, &aux);
  return {std::move(model), std::move(report)};
}

double component_contribution(const ComponentHead& head) {
  if (head.depth() != 1) {
    throw Error(ErrorCode::DeepHeadUnsupported,
                "contribution scores need a one-layer head, got " + std::to_string(head.depth()) + " layers");
  }
  const auto& layer = head.layers.front();
  double sum = layer.bias.at(0);
  for (double w : layer.weight.data) sum += w;
  return sum;
}

double component_contribution(const NeatModel& model, std::size_t r) {
  return component_contribution(model.heads.at(r));
}

double component_contribution(const CoupledNeatModel& model, Which which, std::size_t r) {
  return component_contribution(which == Which::X ? model.heads_x.at(r) : model.heads_y.at(r));
}

std::string_view to_string(ComponentTag tag) {
  switch (tag) {
    case ComponentTag::Shared: return "Shared";
    case ComponentTag::XSpecific: return "XSpecific";
    case ComponentTag::YSpecific: return "YSpecific";
    case ComponentTag::Inactive: return "Inactive";
  }
  return "Inactive";
}

std::vector<ComponentTag> tag_components(std::span<const double> scores_x, std::span<const double> scores_y,
                                         double activity_threshold) {
  if (scores_x.size() != scores_y.size()) throw Error(ErrorCode::ShapeMismatch, "score lists differ in length");
  if (scores_x.empty()) throw Error(ErrorCode::DegenerateScores, "no components to tag");
  const double max_x = *std::max_element(scores_x.begin(), scores_x.end());
  const double max_y = *std::max_element(scores_y.begin(), scores_y.end());
  if (!(max_x > 0.0)) throw Error(ErrorCode::DegenerateScores, "all X contribution scores are <= 0");
  if (!(max_y > 0.0)) throw Error(ErrorCode::DegenerateScores, "all Y contribution scores are <= 0");
  std::vector<ComponentTag> tags;
  for (std::size_t r = 0; r < scores_x.size(); ++r) {
    const bool in_x = scores_x[r] / max_x >= activity_threshold;
    const bool in_y = scores_y[r] / max_y >= activity_threshold;
    tags.push_back(in_x && in_y ? ComponentTag::Shared
                   : in_x       ? ComponentTag::XSpecific
                   : in_y       ? ComponentTag::YSpecific
                                : ComponentTag::Inactive);
  }
  return tags;
}

std::vector<ComponentTag> identify_components(const CoupledNeatModel& model, double activity_threshold) {
  std::vector<double> sx;
  std::vector<double> sy;
  for (std::size_t r = 0; r < model.rank(); ++r) {
    sx.push_back(component_contribution(model, Which::X, r));
    sy.push_back(component_contribution(model, Which::Y, r));
  }
  return tag_components(sx, sy, activity_threshold);
}

}  // namespace bnpipe
