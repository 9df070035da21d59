#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "nn/network.hpp"

namespace ddnet::models {

enum class ArchId { cnn1, cnn2, cnn3 };

const char* arch_name(ArchId arch);
ArchId arch_from_name(const std::string& name);

struct ModelSpec {
  ArchId arch = ArchId::cnn1;
  nn::Shape input_shape{1, 90, 90};  // C x H x W
  std::vector<nn::LayerSpec> layers;
  std::size_t num_classes = 2;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct Model {
  ModelSpec spec;
  nn::ParamList params;
};

// Layer list for an architecture. Kernels are square, convolutions use
// stride 1 with same-size zero padding, every convolution is followed by ReLU
// and 3x3/stride-2 max pooling, one batchnorm sits between the convolutional
// stack and the classifier, and hidden dense layers use ReLU.
ModelSpec model_spec(ArchId arch, std::size_t channels = 1);

// Checks the shape chain and that the last layer is a dense layer with
// num_classes outputs. Throws a dimension error otherwise.
void validate_spec(const ModelSpec& spec);

// Feature count entering the first dense layer.
std::size_t flatten_size(const ModelSpec& spec);

Model build_model(ArchId arch, std::uint64_t seed, std::size_t channels = 1);

// Sets the rate of the named dropout layer.
void set_dropout_rate(ModelSpec& spec, const std::string& layer, double rate);

// Train mode keeps caches and updates batchnorm running statistics in `model`.
nn::ForwardTrace model_forward(Model& model, const nn::Tensor& batch, nn::Mode mode, Rng& rng);

// Inference-mode logits. The model is not modified.
nn::Tensor predict_logits(const Model& model, const nn::Tensor& batch);
nn::Tensor predict_probs(const Model& model, const nn::Tensor& batch);

// Index of the largest entry per row; ties go to the lower index.
std::vector<std::size_t> argmax_rows(const nn::Tensor& matrix);

}  // namespace ddnet::models
