#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bnpipe/decomposition.hpp"
#include "bnpipe/matrix.hpp"
#include "bnpipe/nonneg.hpp"
#include "bnpipe/tensor.hpp"

namespace bnpipe {

struct DenseLayer {
  Matrix weight;               // out x in
  std::vector<double> bias;    // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-component network: affine layers with ReLU between them and no
/// output activation. The final layer has width 1.
struct ComponentHead {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t depth() const { return layers.size(); }
  double forward(std::span<const double> input) const;

  /// Layer widths `input -> hidden... -> 1`, all parameters zero.
  static ComponentHead zeros(std::size_t input, std::span<const std::size_t> hidden = {});

  friend bool operator==(const ComponentHead&, const ComponentHead&) = default;
};

/// Neural additive decomposition of one tensor:
/// x(i,j,k) = sum_r head_r(phi([A(i,r), B(j,r), C(k,r)])).
struct NeatModel {
  std::vector<Matrix> factors;
  std::vector<ComponentHead> heads;
  NonnegMap nonneg = NonnegMap::Softplus;

  std::size_t rank() const { return heads.size(); }
  std::size_t modes() const { return factors.size(); }
  std::vector<std::size_t> shape() const;

  NeatModel zeros_like() const;
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  friend bool operator==(const NeatModel&, const NeatModel&) = default;
};

/// Coupled NeAT: shared trial/time factors, tensor-specific C / D and heads.
struct CoupledNeatModel {
  Matrix trial;
  Matrix time;
  Matrix neuron;
  std::optional<Matrix> behavior;
  std::vector<ComponentHead> heads_x;
  std::vector<ComponentHead> heads_y;
  NonnegMap nonneg = NonnegMap::Softplus;

  std::size_t rank() const { return heads_x.size(); }
  std::vector<std::size_t> x_shape() const;
  std::vector<std::size_t> y_shape() const;

  CoupledNeatModel zeros_like() const;
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  friend bool operator==(const CoupledNeatModel&, const CoupledNeatModel&) = default;
};

enum class Which { X, Y };

void check_layout(const NeatModel& model);
void check_layout(const CoupledNeatModel& model);

double neat_predict(const NeatModel& model, const Index& index);
double neat_predict(const CoupledNeatModel& model, const Index& index, Which which);

/// Seeded initialization: factors ~ Normal(0, 0.5), head weights
/// ~ Normal(0, 1/sqrt(fan_in)), head biases zero.
NeatModel init_neat(const std::vector<std::size_t>& shape, const TrainConfig& config);
CoupledNeatModel init_coupled_neat(const std::vector<std::size_t>& x_shape, const std::vector<std::size_t>& y_shape,
                                   const TrainConfig& config);

double neat_loss(const NeatModel& model, const SparseTensor& tensor);
double neat_loss_gradient(const NeatModel& model, const SparseTensor& tensor, NeatModel& grad);
double coupled_neat_loss(const CoupledNeatModel& model, const SparseTensor& x, const SparseTensor& y,
                         double coupling_weight);
double coupled_neat_loss_gradient(const CoupledNeatModel& model, const SparseTensor& x, const SparseTensor& y,
                                  double coupling_weight, CoupledNeatModel& grad);

FitResult<NeatModel> fit_neat(const SparseTensor& tensor, const TrainConfig& config);
FitResult<CoupledNeatModel> fit_coupled_neat(const SparseTensor& x, const SparseTensor& y,
                                             const TrainConfig& config);

/// Sum of weights plus bias of a one-layer head. DeepHeadUnsupported otherwise.
double component_contribution(const ComponentHead& head);
double component_contribution(const NeatModel& model, std::size_t r);
double component_contribution(const CoupledNeatModel& model, Which which, std::size_t r);

enum class ComponentTag { Shared, XSpecific, YSpecific, Inactive };

std::string_view to_string(ComponentTag tag);

/// Tags from per-tensor contribution scores: each tensor's scores are divided
/// by that tensor's maximum (which must be > 0), and a component is active
/// for the tensor when its normalized score is >= threshold.
std::vector<ComponentTag> tag_components(std::span<const double> scores_x, std::span<const double> scores_y,
                                         double activity_threshold = 0.5);

std::vector<ComponentTag> identify_components(const CoupledNeatModel& model, double activity_threshold = 0.5);

}  // namespace bnpipe
