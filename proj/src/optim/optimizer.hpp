#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nn/network.hpp"

namespace ddnet::optim {

enum class OptimizerKind { sgd_momentum, adam };

const char* optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);

struct Hyper {
  double learning_rate = 0.001;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter moment buffers mirroring the parameter shapes. For SGD only
// `first` (the velocity) is used. Non-trainable parameters get empty slots.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  Hyper hyper;
  std::vector<nn::Tensor> first;
  std::vector<nn::Tensor> second;
  std::uint64_t step_count = 0;

  static OptimizerState create(OptimizerKind kind, const Hyper& hyper, const nn::ParamList& params);
};

// v <- momentum * v - lr * g; p <- p + v
void sgd_momentum_step(nn::ParamList& params, const std::vector<nn::Tensor>& grads,
                       OptimizerState& state);

// Bias-corrected Adam with t = step_count after the increment.
void adam_step(nn::ParamList& params, const std::vector<nn::Tensor>& grads, OptimizerState& state);

// Dispatches on state.kind.
void step(nn::ParamList& params, const std::vector<nn::Tensor>& grads, OptimizerState& state);

}  // namespace ddnet::optim
