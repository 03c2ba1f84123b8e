#pragma once

// Shared mini-batch training loop for every decomposition model.
//
// A Kernel binds to (const Model&, Model& grad) and provides
//   begin()                       refresh effective parameters, zero gradients
//   forward(tensor, index)        prediction for tensor 0 (X) or 1 (Y)
//   backward(tensor, index, d)    accumulate d * dprediction/dparams; must follow
//                                 forward() on the same index
//   finish()                      write raw-parameter gradients into grad

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "bnpipe/adam.hpp"
#include "bnpipe/decomposition.hpp"
#include "bnpipe/random.hpp"

namespace bnpipe::detail {

inline constexpr std::uint64_t kAuxStream = 1;

template <class Model>
std::vector<std::span<const double>> const_blocks(Model& m) {
  std::vector<std::span<const double>> out;
  for (auto b : m.parameters()) out.emplace_back(b);
  return out;
}

struct SquaredError {
  double x = 0.0;
  double y = 0.0;
};

template <class Kernel>
SquaredError squared_error(Kernel& kernel, const SparseTensor& x, const SparseTensor* y) {
  kernel.begin();
  SquaredError se;
  for (const auto& e : x.entries()) {
    const double r = kernel.forward(0, e.index) - e.value;
    se.x += r * r;
  }
  if (y) {
    for (const auto& e : y->entries()) {
      const double r = kernel.forward(1, e.index) - e.value;
      se.y += r * r;
    }
  }
  return se;
}

/// Full-data loss SSx + w * SSy and its gradient (scale 1, no batching).
template <class Kernel, class Model>
double loss_and_gradient(const Model& model, const SparseTensor& x, const SparseTensor* y, double weight,
                         Model* grad) {
  Model scratch = model.zeros_like();
  Model& g = grad ? *grad : scratch;
  if (grad) g = model.zeros_like();
  Kernel kernel(model, g);
  kernel.begin();
  double loss_x = 0.0;
  double loss_y = 0.0;
  for (const auto& e : x.entries()) {
    const double r = kernel.forward(0, e.index) - e.value;
    loss_x += r * r;
    if (grad) kernel.backward(0, e.index, 2.0 * r);
  }
  if (y) {
    for (const auto& e : y->entries()) {
      const double r = kernel.forward(1, e.index) - e.value;
      loss_y += r * r;
      if (grad) kernel.backward(1, e.index, 2.0 * weight * r);
    }
  }
  if (grad) kernel.finish();
  return loss_x + weight * loss_y;
}

template <class Model, class Kernel>
FitReport run_fit(Model& model, const SparseTensor& x, const SparseTensor* y, const TrainConfig& config,
                  Rng& x_rng, Rng* y_rng) {
  const double weight = y ? config.coupling_weight : 0.0;
  const std::size_t nx = x.size();
  const std::size_t ny = y ? y->size() : 0;

  Model grad = model.zeros_like();
  Kernel kernel(model, grad);
  Adam adam(model.parameters(), Adam::Options{.learning_rate = config.learning_rate});

  FitReport report;
  report.seed = config.seed;

  auto evaluate = [&]() {
    const auto se = squared_error(kernel, x, y);
    const double pooled = std::sqrt((se.x + weight * se.y) / (static_cast<double>(nx) + weight * static_cast<double>(ny)));
    report.final_rmse_x = std::sqrt(se.x / static_cast<double>(nx));
    if (y) report.final_rmse_y = std::sqrt(se.y / static_cast<double>(ny));
    return pooled;
  };

  double current = evaluate();
  report.history.push_back({0, current});
  if (!std::isfinite(current)) {
    throw NonFiniteLoss<Model>(model, report, "initial model produces a non-finite loss");
  }

  std::vector<std::size_t> order_x(nx);
  std::vector<std::size_t> order_y(ny);
  std::iota(order_x.begin(), order_x.end(), std::size_t{0});
  std::iota(order_y.begin(), order_y.end(), std::size_t{0});

  const auto& xs = x.entries();
  const std::size_t steps = (nx + config.batch_size - 1) / config.batch_size;
  const double y_scale = weight * static_cast<double>(steps) / static_cast<double>(nx);

  Model last_finite = model;
  double best = current;
  int stall = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    x_rng.shuffle(std::span(order_x));
    if (y) y_rng->shuffle(std::span(order_y));

    for (std::size_t s = 0; s < steps; ++s) {
      kernel.begin();
      const std::size_t x_begin = s * config.batch_size;
      const std::size_t x_end = std::min(nx, x_begin + config.batch_size);
      const double x_scale = 1.0 / static_cast<double>(x_end - x_begin);
      for (std::size_t i = x_begin; i < x_end; ++i) {
        const auto& e = xs[order_x[i]];
        const double r = kernel.forward(0, e.index) - e.value;
        kernel.backward(0, e.index, 2.0 * x_scale * r);
      }
      if (y) {
        // Y is cut into the same number of steps as X, in near-equal chunks.
        const std::size_t y_begin = s * ny / steps;
        const std::size_t y_end = (s + 1) * ny / steps;
        const auto& ys = y->entries();
        for (std::size_t i = y_begin; i < y_end; ++i) {
          const auto& e = ys[order_y[i]];
          const double r = kernel.forward(1, e.index) - e.value;
          kernel.backward(1, e.index, 2.0 * y_scale * r);
        }
      }
      kernel.finish();
      adam.step(model.parameters(), const_blocks(grad));
    }

    current = evaluate();
    if (!std::isfinite(current)) {
      model = last_finite;
      evaluate();
      report.final_train_rmse = report.history.back().train_rmse;
      throw NonFiniteLoss<Model>(last_finite, report,
                                 "loss diverged at epoch " + std::to_string(epoch) + "; last finite train RMSE " +
                                     format_double(report.final_train_rmse));
    }
    last_finite = model;
    report.history.push_back({epoch, current});

    if (config.early_stop_patience > 0) {
      if (best - current < config.early_stop_delta) {
        if (++stall >= config.early_stop_patience) {
          report.stopped_early = true;
          break;
        }
      } else {
        stall = 0;
      }
      best = std::min(best, current);
    }
  }
  report.final_train_rmse = report.history.back().train_rmse;
  return report;
}

}  // namespace bnpipe::detail
