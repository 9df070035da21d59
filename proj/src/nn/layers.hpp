#pragma once

#include <cstddef>
#include <vector>

#include "core/rng.hpp"
#include "nn/ops.hpp"
#include "nn/tensor.hpp"

namespace ddnet::nn {

enum class LayerKind { conv2d, relu, maxpool2d, dense, batchnorm, dropout, flatten, softmax_xent };
enum class Mode { train, infer };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct ConvParams {
  Tensor weights;  // [out_channels, in_channels, k, k]
  Tensor bias;     // [out_channels]
  std::size_t stride = 1;
  Padding padding;
};

struct BatchNormState {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState identity(std::size_t channels);
};

// Everything a layer's backward pass needs from its forward pass.
struct LayerCache {
  LayerKind kind = LayerKind::relu;
  Shape input_shape;
  std::vector<Tensor> saved;           // conv/dense: {input, weights}; relu: {input}; softmax: {probs}
  std::vector<std::size_t> argmax;     // maxpool: flat input index per output cell
  std::vector<std::size_t> labels;     // softmax_xent
  Tensor mask;                         // dropout; empty means identity
  std::vector<double> inv_std;         // batchnorm, per channel
  Tensor normalized;                   // batchnorm x-hat
  Tensor gamma;                        // batchnorm
  bool batch_statistics = true;        // batchnorm: false when normalized by running stats
  std::size_t kernel = 0;
  std::size_t stride = 1;
  Padding padding;
};

struct LayerOutput {
  Tensor output;
  LayerCache cache;
};

struct LayerGrads {
  Tensor input;
  std::vector<Tensor> params;  // conv/dense: {weights, bias}; batchnorm: {gamma, beta}
};

LayerOutput conv2d_forward(const Tensor& input, const ConvParams& p);
LayerOutput relu_forward(const Tensor& input);
LayerOutput maxpool_forward(const Tensor& input, std::size_t kernel, std::size_t stride);
LayerOutput dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
// Train mode updates the running statistics in `state`.
LayerOutput batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode);
LayerOutput dropout_forward(const Tensor& input, double rate, Mode mode, Rng& rng);

// Forward passes that reuse the routing decisions recorded in `cache`
// (ReLU active set, pooling argmax, dropout mask) instead of recomputing them.
// The resulting function is smooth in the input, which is what a
// finite-difference check of the recorded backward pass needs.
Tensor relu_replay(const Tensor& input, const LayerCache& cache);
Tensor maxpool_replay(const Tensor& input, const LayerCache& cache);
Tensor dropout_replay(const Tensor& input, const LayerCache& cache);

struct SoftmaxXent {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;
  LayerCache cache;
};

SoftmaxXent softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

// For softmax_xent the upstream is a one-element tensor scaling the loss.
LayerGrads layer_backward(LayerKind kind, const LayerCache& cache, const Tensor& upstream,
                          bool want_input_grad = true);

}  // namespace ddnet::nn
