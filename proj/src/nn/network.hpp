#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "nn/layers.hpp"

namespace ddnet::nn {

// One entry of a sequential layer list.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t out_channels = 0;  // conv2d
  std::size_t kernel = 0;        // conv2d, maxpool2d
  std::size_t stride = 1;        // conv2d, maxpool2d
  Padding padding;               // conv2d
  std::size_t units = 0;         // dense
  double rate = 0.0;             // dropout
  double momentum = 0.1;         // batchnorm
  double epsilon = 1e-5;         // batchnorm

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;  // batchnorm running statistics are not
};

using ParamList = std::vector<NamedTensor>;

// Number of ParamList entries a layer owns: conv/dense {weight, bias},
// batchnorm {gamma, beta, running_mean, running_var}.
std::size_t param_count(LayerKind kind);

// Per-sample output shape of every layer (index i is the output of layer i).
// Throws a dimension error naming the first layer whose input does not chain.
std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const Shape& sample_shape);

// Declared parameter shapes, in ParamList order.
std::vector<std::pair<std::string, Shape>> param_shapes(const std::vector<LayerSpec>& layers,
                                                        const Shape& sample_shape);

// He-normal weights (std = sqrt(2 / fan_in)), zero biases, unit gamma, zero
// beta, running mean 0 and running variance 1.
ParamList init_params(const std::vector<LayerSpec>& layers, const Shape& sample_shape, Rng& rng);

struct ForwardTrace {
  Tensor output;
  std::vector<LayerCache> caches;  // empty unless requested
};

// Runs the layer list on a batch (leading axis N). Train mode draws dropout
// masks from `rng` and, when `stats_sink` is set, writes the updated batchnorm
// running statistics into it (usually the same list as `params`). When
// `routing` is given the ReLU/maxpool/dropout decisions are replayed from it.
ForwardTrace sequential_forward(const std::vector<LayerSpec>& layers, const ParamList& params,
                                const Tensor& batch, Mode mode, Rng& rng, bool keep_caches,
                                const std::vector<LayerCache>* routing = nullptr,
                                ParamList* stats_sink = nullptr);

struct BackwardResult {
  Tensor input;                     // empty unless requested
  std::vector<Tensor> param_grads;  // aligned with ParamList; empty for non-trainable
};

BackwardResult sequential_backward(const std::vector<LayerSpec>& layers, const ParamList& params,
                                   const std::vector<LayerCache>& caches, const Tensor& upstream,
                                   bool want_input_grad);

struct GradCheckOptions {
  double epsilon = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of at most this many
  // coordinates per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares the analytic gradient of a scalar loss against central finite
// differences for every trainable parameter and the input. The loss is mean
// softmax cross-entropy when `labels` is given, otherwise a fixed seeded
// random projection of the output. The forward pass runs in train mode; its
// dropout masks, pooling argmaxes and ReLU active sets are frozen while
// perturbing. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult gradient_check(const std::vector<LayerSpec>& layers, const ParamList& params,
                               const Tensor& input,
                               const std::optional<std::vector<std::size_t>>& labels,
                               const GradCheckOptions& options);

}  // namespace ddnet::nn
