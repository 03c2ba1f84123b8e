#pragma once

#include <vector>

#include "bnpipe/neat.hpp"

namespace bnpipe::detail {

/// NeAT prediction and gradient. Each tensor path reads a subset of the
/// factor matrices and one set of R heads.
class NeatKernelCore {
 public:
  struct Path {
    std::vector<std::size_t> factors;
    std::size_t heads;
  };

  struct Binding {
    std::vector<const Matrix*> raw_factors;
    std::vector<Matrix*> grad_factors;
    std::vector<const std::vector<ComponentHead>*> heads;
    std::vector<std::vector<ComponentHead>*> grad_heads;
  };

  NeatKernelCore(std::vector<Path> paths, NonnegMap map) : paths_(std::move(paths)), map_(map) {}

  void begin(const Binding& binding) {
    binding_ = binding;
    eff_f_.resize(binding.raw_factors.size());
    grad_f_.resize(binding.raw_factors.size());
    for (std::size_t i = 0; i < binding.raw_factors.size(); ++i) {
      const auto& raw = *binding.raw_factors[i];
      if (eff_f_[i].data.size() != raw.data.size()) {
        eff_f_[i] = Matrix(raw.rows, raw.cols);
        grad_f_[i] = Matrix(raw.rows, raw.cols);
      }
      for (std::size_t j = 0; j < raw.data.size(); ++j) eff_f_[i].data[j] = phi(map_, raw.data[j]);
      std::fill(grad_f_[i].data.begin(), grad_f_[i].data.end(), 0.0);
    }
    for (auto* set : binding.grad_heads) {
      for (auto& head : *set) {
        for (auto& layer : head.layers) {
          std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
          std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
        }
      }
    }
  }

  double forward(int tensor, const Index& index) {
    const auto& path = paths_[tensor];
    const auto& heads = *binding_.heads[path.heads];
    const std::size_t rank = heads.size();
    if (cache_.size() < rank) cache_.resize(rank);
    double total = 0.0;
    for (std::size_t r = 0; r < rank; ++r) {
      const auto& head = heads[r];
      auto& c = cache_[r];
      c.act.resize(head.layers.size() + 1);
      c.pre.resize(head.layers.size());
      c.act[0].resize(path.factors.size());
      for (std::size_t m = 0; m < path.factors.size(); ++m) c.act[0][m] = eff_f_[path.factors[m]](index[m], r);
      for (std::size_t l = 0; l < head.layers.size(); ++l) {
        const auto& layer = head.layers[l];
        auto& pre = c.pre[l];
        auto& out = c.act[l + 1];
        pre.resize(layer.weight.rows);
        out.resize(layer.weight.rows);
        const bool hidden = l + 1 < head.layers.size();
        for (std::size_t o = 0; o < layer.weight.rows; ++o) {
          double s = layer.bias[o];
          const auto w = layer.weight.row(o);
          for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * c.act[l][i];
          pre[o] = s;
          out[o] = hidden ? (s > 0.0 ? s : 0.0) : s;
        }
      }
      total += c.act.back()[0];
    }
    return total;
  }

  void backward(int tensor, const Index& index, double d) {
    const auto& path = paths_[tensor];
    const auto& heads = *binding_.heads[path.heads];
    auto& grad_heads = *binding_.grad_heads[path.heads];
    for (std::size_t r = 0; r < heads.size(); ++r) {
      const auto& head = heads[r];
      auto& ghead = grad_heads[r];
      auto& c = cache_[r];
      delta_.assign(1, d);
      for (std::size_t l = head.layers.size(); l-- > 0;) {
        const auto& layer = head.layers[l];
        auto& glayer = ghead.layers[l];
        const auto& in = c.act[l];
        next_.assign(in.size(), 0.0);
        for (std::size_t o = 0; o < layer.weight.rows; ++o) {
          const double g = delta_[o];
          glayer.bias[o] += g;
          const auto w = layer.weight.row(o);
          auto gw = glayer.weight.row(o);
          for (std::size_t i = 0; i < w.size(); ++i) {
            gw[i] += g * in[i];
            next_[i] += w[i] * g;
          }
        }
        if (l > 0) {
          const auto& pre = c.pre[l - 1];
          for (std::size_t i = 0; i < next_.size(); ++i) {
            if (!(pre[i] > 0.0)) next_[i] = 0.0;
          }
        }
        std::swap(delta_, next_);
      }
      for (std::size_t m = 0; m < path.factors.size(); ++m) grad_f_[path.factors[m]](index[m], r) += delta_[m];
    }
  }

  void finish() {
    for (std::size_t i = 0; i < grad_f_.size(); ++i) {
      const auto& raw = binding_.raw_factors[i]->data;
      auto& out = binding_.grad_factors[i]->data;
      for (std::size_t j = 0; j < raw.size(); ++j) out[j] = grad_f_[i].data[j] * phi_derivative(map_, raw[j]);
    }
  }

 private:
  struct HeadCache {
    std::vector<std::vector<double>> act;  // act[0] = head input, act[l+1] = output of layer l
    std::vector<std::vector<double>> pre;
  };

  std::vector<Path> paths_;
  NonnegMap map_;
  Binding binding_;
  std::vector<Matrix> eff_f_;
  std::vector<Matrix> grad_f_;
  std::vector<HeadCache> cache_;
  std::vector<double> delta_;
  std::vector<double> next_;
};

class NeatKernel : public NeatKernelCore {
 public:
  NeatKernel(const NeatModel& model, NeatModel& grad)
      : NeatKernelCore({Path{identity(model.modes()), 0}}, model.nonneg), model_(model), grad_(grad) {}

  void begin() {
    Binding b;
    for (std::size_t m = 0; m < model_.modes(); ++m) {
      b.raw_factors.push_back(&model_.factors[m]);
      b.grad_factors.push_back(&grad_.factors[m]);
    }
    b.heads.push_back(&model_.heads);
    b.grad_heads.push_back(&grad_.heads);
    NeatKernelCore::begin(b);
  }

 private:
  static std::vector<std::size_t> identity(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
  }

  const NeatModel& model_;
  NeatModel& grad_;
};

class CoupledNeatKernel : public NeatKernelCore {
 public:
  CoupledNeatKernel(const CoupledNeatModel& model, CoupledNeatModel& grad)
      : NeatKernelCore({Path{{0, 1, 2}, 0}, model.behavior ? Path{{0, 1, 3}, 1} : Path{{0, 1}, 1}}, model.nonneg),
        model_(model),
        grad_(grad) {}

  void begin() {
    Binding b;
    b.raw_factors = {&model_.trial, &model_.time, &model_.neuron};
    b.grad_factors = {&grad_.trial, &grad_.time, &grad_.neuron};
    if (model_.behavior) {
      b.raw_factors.push_back(&*model_.behavior);
      b.grad_factors.push_back(&*grad_.behavior);
    }
    b.heads = {&model_.heads_x, &model_.heads_y};
    b.grad_heads = {&grad_.heads_x, &grad_.heads_y};
    NeatKernelCore::begin(b);
  }

 private:
  const CoupledNeatModel& model_;
  CoupledNeatModel& grad_;
};

}  // namespace bnpipe::detail
