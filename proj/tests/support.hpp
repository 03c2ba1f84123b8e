#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <gtest/gtest.h>
#include <utility>
#include <vector>

#include "bnpipe/cp_model.hpp"
#include "bnpipe/neat.hpp"
#include "bnpipe/random.hpp"
#include "bnpipe/tensor.hpp"

namespace bnpipe::testing {

/// Code of the Error thrown by `f`; records a failure when nothing is thrown.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Empty;
}

/// Every cell of `shape` observed, valued by `value(index)`.
inline SparseTensor dense_tensor(const std::vector<std::size_t>& shape, const std::function<double(const Index&)>& value,
                                 std::string name = "t") {
  std::vector<Entry> entries;
  const std::size_t k_dim = shape.size() == 3 ? shape[2] : 1;
  for (std::size_t i = 0; i < shape[0]; ++i) {
    for (std::size_t j = 0; j < shape[1]; ++j) {
      for (std::size_t k = 0; k < k_dim; ++k) {
        const Index idx{i, j, k};
        entries.push_back({idx, value(idx)});
      }
    }
  }
  return SparseTensor(shape, std::move(entries), std::move(name));
}

inline Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal(0.0, sd);
  return m;
}

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

/// Raw matrix whose effective values are uniform in [lo, hi).
inline Matrix uniform_effective(Rng& rng, std::size_t rows, std::size_t cols, NonnegMap map, double lo, double hi) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = phi_inverse(map, lo + (hi - lo) * rng.uniform());
  return m;
}

inline ComponentHead random_head(Rng& rng, std::size_t input, std::span<const std::size_t> hidden = {}) {
  auto head = ComponentHead::zeros(input, hidden);
  for (auto& layer : head.layers) {
    for (auto& w : layer.weight.data) w = rng.normal(0.0, 1.0);
    for (auto& b : layer.bias) b = rng.normal(0.0, 0.5);
  }
  return head;
}

/// Keeps a uniformly chosen `fraction` of the entries.
inline SparseTensor subsample(const SparseTensor& t, double fraction, Rng& rng) {
  std::vector<Entry> kept;
  for (const auto& e : t.entries()) {
    if (rng.uniform() < fraction) kept.push_back(e);
  }
  return t.with_entries(std::move(kept));
}

/// Central-difference check of an analytic gradient.
///
/// `loss(model)` evaluates the loss and `grad(model, g)` fills `g` with the
/// analytic gradient. Returns ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, 1e-10) over the full parameter vector.
template <class Model, class Loss, class Grad>
double gradient_relative_error(Model model, Loss loss, Grad grad, double h = 1e-5) {
  Model analytic = model.zeros_like();
  grad(model, analytic);
  auto params = model.parameters();
  const auto agrad = std::as_const(analytic).parameters();
  double diff2 = 0.0;
  double a2 = 0.0;
  double n2 = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double saved = params[b][i];
      params[b][i] = saved + h;
      const double up = loss(model);
      params[b][i] = saved - h;
      const double down = loss(model);
      params[b][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = agrad[b][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace bnpipe::testing
