#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bnpipe/matrix.hpp"
#include "bnpipe/nonneg.hpp"
#include "bnpipe/tensor.hpp"

namespace bnpipe {

/// Rank-R CP model. Factors and weights are stored raw; every use goes
/// through the non-negativity map, so effective values are always >= 0.
struct CpModel {
  std::vector<Matrix> factors;  // one (mode size x R) matrix per mode
  std::vector<double> weights;  // length R
  NonnegMap nonneg = NonnegMap::Softplus;

  std::size_t rank() const { return weights.size(); }
  std::size_t modes() const { return factors.size(); }
  std::vector<std::size_t> shape() const;

  /// Same layout, all parameters zero. Used as a gradient accumulator.
  CpModel zeros_like() const;

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  friend bool operator==(const CpModel&, const CpModel&) = default;
};

/// Two CP models sharing the trial (A) and time (B) factors.
///
/// X is (trial x time x neuron) and uses A, B, C with weights_x.
/// Y is (trial x time) or (trial x time x behavior) and uses A, B[, D] with weights_y.
struct CoupledCpModel {
  Matrix trial;                     // A
  Matrix time;                      // B
  Matrix neuron;                    // C
  std::optional<Matrix> behavior;   // D, absent for a two-mode Y
  std::vector<double> weights_x;    // lambda
  std::vector<double> weights_y;    // gamma
  NonnegMap nonneg = NonnegMap::Softplus;

  std::size_t rank() const { return weights_x.size(); }
  std::vector<std::size_t> x_shape() const;
  std::vector<std::size_t> y_shape() const;

  CoupledCpModel zeros_like() const;
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  /// Single-tensor views (copies) of the two prediction paths.
  CpModel x_model() const;
  CpModel y_model() const;

  friend bool operator==(const CoupledCpModel&, const CoupledCpModel&) = default;
};

/// Throws ShapeMismatch if column counts or mode counts are inconsistent.
void check_layout(const CpModel& model);
void check_layout(const CoupledCpModel& model);

/// sum_r phi(w_r) * prod_m phi(F_m[index_m, r]).
double reconstruct_cp(const CpModel& model, const Index& index);
double reconstruct_x(const CoupledCpModel& model, const Index& index);
double reconstruct_y(const CoupledCpModel& model, const Index& index);

/// Effective (post-map) copy of a raw matrix or vector.
Matrix effective(const Matrix& raw, NonnegMap map);
std::vector<double> effective(std::span<const double> raw, NonnegMap map);

}  // namespace bnpipe
