#pragma once

#include <vector>

#include "bnpipe/cp_model.hpp"

namespace bnpipe::detail {

/// CP prediction and gradient over a set of factor matrices and weight
/// vectors, where each tensor reads a subset of factors and one weight vector.
class CpKernelCore {
 public:
  struct Path {
    std::vector<std::size_t> factors;
    std::size_t weights;
  };

  struct Binding {
    std::vector<const Matrix*> raw_factors;
    std::vector<const std::vector<double>*> raw_weights;
    std::vector<Matrix*> grad_factors;
    std::vector<std::vector<double>*> grad_weights;
  };

  CpKernelCore(std::vector<Path> paths, NonnegMap map) : paths_(std::move(paths)), map_(map) {}

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
    eff_w_.resize(binding.raw_weights.size());
    grad_w_.resize(binding.raw_weights.size());
    for (std::size_t i = 0; i < binding.raw_weights.size(); ++i) {
      const auto& raw = *binding.raw_weights[i];
      eff_w_[i].resize(raw.size());
      grad_w_[i].assign(raw.size(), 0.0);
      for (std::size_t j = 0; j < raw.size(); ++j) eff_w_[i][j] = phi(map_, raw[j]);
    }
  }

  double forward(int tensor, const Index& index) const {
    const auto& path = paths_[tensor];
    const auto& w = eff_w_[path.weights];
    double total = 0.0;
    for (std::size_t r = 0; r < w.size(); ++r) {
      double term = w[r];
      for (std::size_t m = 0; m < path.factors.size(); ++m) term *= eff_f_[path.factors[m]](index[m], r);
      total += term;
    }
    return total;
  }

  void backward(int tensor, const Index& index, double d) {
    const auto& path = paths_[tensor];
    const auto& w = eff_w_[path.weights];
    auto& gw = grad_w_[path.weights];
    const std::size_t modes = path.factors.size();
    double vals[kMaxModes];
    for (std::size_t r = 0; r < w.size(); ++r) {
      double prod = 1.0;
      for (std::size_t m = 0; m < modes; ++m) {
        vals[m] = eff_f_[path.factors[m]](index[m], r);
        prod *= vals[m];
      }
      gw[r] += d * prod;
      for (std::size_t m = 0; m < modes; ++m) {
        double others = w[r];
        for (std::size_t o = 0; o < modes; ++o) {
          if (o != m) others *= vals[o];
        }
        grad_f_[path.factors[m]](index[m], r) += d * others;
      }
    }
  }

  void finish() {
    for (std::size_t i = 0; i < grad_f_.size(); ++i) {
      const auto& raw = binding_.raw_factors[i]->data;
      auto& out = binding_.grad_factors[i]->data;
      for (std::size_t j = 0; j < raw.size(); ++j) out[j] = grad_f_[i].data[j] * phi_derivative(map_, raw[j]);
    }
    for (std::size_t i = 0; i < grad_w_.size(); ++i) {
      const auto& raw = *binding_.raw_weights[i];
      auto& out = *binding_.grad_weights[i];
      for (std::size_t j = 0; j < raw.size(); ++j) out[j] = grad_w_[i][j] * phi_derivative(map_, raw[j]);
    }
  }

 private:
  std::vector<Path> paths_;
  NonnegMap map_;
  Binding binding_;
  std::vector<Matrix> eff_f_;
  std::vector<Matrix> grad_f_;
  std::vector<std::vector<double>> eff_w_;
  std::vector<std::vector<double>> grad_w_;
};

class CpKernel : public CpKernelCore {
 public:
  CpKernel(const CpModel& model, CpModel& grad)
      : CpKernelCore({Path{identity(model.modes()), 0}}, model.nonneg), model_(model), grad_(grad) {}

  void begin() {
    Binding b;
    for (std::size_t m = 0; m < model_.modes(); ++m) {
      b.raw_factors.push_back(&model_.factors[m]);
      b.grad_factors.push_back(&grad_.factors[m]);
    }
    b.raw_weights.push_back(&model_.weights);
    b.grad_weights.push_back(&grad_.weights);
    CpKernelCore::begin(b);
  }

 private:
  static std::vector<std::size_t> identity(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
  }

  const CpModel& model_;
  CpModel& grad_;
};

class CoupledCpKernel : public CpKernelCore {
 public:
  CoupledCpKernel(const CoupledCpModel& model, CoupledCpModel& grad)
      : CpKernelCore({Path{{0, 1, 2}, 0}, model.behavior ? Path{{0, 1, 3}, 1} : Path{{0, 1}, 1}}, model.nonneg),
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
    b.raw_weights = {&model_.weights_x, &model_.weights_y};
    b.grad_weights = {&grad_.weights_x, &grad_.weights_y};
    CpKernelCore::begin(b);
  }

 private:
  const CoupledCpModel& model_;
  CoupledCpModel& grad_;
};

}  // namespace bnpipe::detail
