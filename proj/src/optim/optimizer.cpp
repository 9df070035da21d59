#include "optim/optimizer.hpp"

#include <cmath>

#include "core/error.hpp"

namespace ddnet::optim {
namespace {

void validate(const nn::ParamList& params, const std::vector<nn::Tensor>& grads,
              const OptimizerState& state) {
  const Hyper& h = state.hyper;
  if (!(h.learning_rate > 0.0)) fail(Errc::invalid_argument, "learning rate must be > 0");
  if (state.kind == OptimizerKind::sgd_momentum && !(h.momentum >= 0.0 && h.momentum < 1.0)) {
    fail(Errc::invalid_argument, "momentum must lie in [0, 1)");
  }
  if (state.kind == OptimizerKind::adam) {
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0) || !(h.beta2 >= 0.0 && h.beta2 < 1.0)) {
      fail(Errc::invalid_argument, "adam betas must lie in [0, 1)");
    }
    if (!(h.epsilon > 0.0)) fail(Errc::invalid_argument, "adam epsilon must be > 0");
  }
  if (grads.size() != params.size() || state.first.size() != params.size()) {
    fail(Errc::dimension, "optimizer given " + std::to_string(grads.size()) + " gradients for " +
                              std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    if (grads[i].shape() != params[i].value.shape() ||
        state.first[i].shape() != params[i].value.shape()) {
      fail(Errc::dimension, "gradient for '" + params[i].name + "' has shape " +
                                nn::shape_string(grads[i].shape()) + ", parameter is " +
                                nn::shape_string(params[i].value.shape()));
    }
    if (!grads[i].all_finite()) {
      fail(Errc::numeric, "non-finite gradient for parameter '" + params[i].name + "'");
    }
  }
}

}  // namespace

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  fail(Errc::invalid_argument, "unknown optimizer '" + name + "'");
}

OptimizerState OptimizerState::create(OptimizerKind kind, const Hyper& hyper,
                                      const nn::ParamList& params) {
  OptimizerState s;
  s.kind = kind;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first.push_back(p.trainable ? nn::Tensor(p.value.shape(), 0.0) : nn::Tensor());
    if (kind == OptimizerKind::adam) {
      s.second.push_back(p.trainable ? nn::Tensor(p.value.shape(), 0.0) : nn::Tensor());
    }
  }
  return s;
}

void sgd_momentum_step(nn::ParamList& params, const std::vector<nn::Tensor>& grads,
                       OptimizerState& state) {
  if (state.kind != OptimizerKind::sgd_momentum) {
    fail(Errc::invalid_argument, "optimizer state is not sgd_momentum");
  }
  validate(params, grads, state);
  const double lr = state.hyper.learning_rate, mu = state.hyper.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto p = params[i].value.data();
    auto v = state.first[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] - lr * g[j];
      p[j] += v[j];
    }
  }
  ++state.step_count;
}

void adam_step(nn::ParamList& params, const std::vector<nn::Tensor>& grads, OptimizerState& state) {
  if (state.kind != OptimizerKind::adam) fail(Errc::invalid_argument, "optimizer state is not adam");
  validate(params, grads, state);
  const Hyper& h = state.hyper;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto p = params[i].value.data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

void step(nn::ParamList& params, const std::vector<nn::Tensor>& grads, OptimizerState& state) {
  if (state.kind == OptimizerKind::adam) {
    adam_step(params, grads, state);
  } else {
    sgd_momentum_step(params, grads, state);
  }
}

}  // namespace ddnet::optim
