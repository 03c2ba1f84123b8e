#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace bnpipe {

/// Adam over a fixed list of parameter blocks. Block sizes are fixed at
/// construction; every step() must pass blocks with the same layout.
class Adam {
 public:
  struct Options {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(const std::vector<std::span<double>>& params, Options options) : options_(options) {
    for (const auto& block : params) {
      first_.emplace_back(block.size(), 0.0);
      second_.emplace_back(block.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& m = first_[b];
      auto& v = second_[b];
      const auto p = params[b];
      const auto g = grads[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
        p[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      }
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  Options options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

}  // namespace bnpipe
