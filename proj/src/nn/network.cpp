#include "nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"

namespace ddnet::nn {
namespace {

[[noreturn]] void chain_error(const LayerSpec& layer, const Shape& in, const std::string& why) {
  fail(Errc::dimension, "layer '" + layer.name + "' (" + layer_kind_name(layer.kind) +
                            ") cannot take input " + shape_string(in) + ": " + why);
}

BatchNormState bn_state(const LayerSpec& layer, const ParamList& params, std::size_t p) {
  BatchNormState s;
  s.gamma = params[p].value;
  s.beta = params[p + 1].value;
  s.running_mean = params[p + 2].value;
  s.running_var = params[p + 3].value;
  s.momentum = layer.momentum;
  s.epsilon = layer.epsilon;
  return s;
}

double loss_and_grad(const Tensor& output, const std::optional<std::vector<std::size_t>>& labels,
                     const Tensor& projection, Tensor* grad) {
  if (labels) {
    auto sx = softmax_cross_entropy(output.reshaped({output.dim(0), output.size() / output.dim(0)}),
                                    *labels);
    if (grad) *grad = std::move(sx.grad_logits).reshaped(output.shape());
    return sx.loss;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) loss += projection[i] * output[i];
  if (grad) *grad = projection;
  return loss;
}

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || size <= limit) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < limit; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::size_t param_count(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d:
    case LayerKind::dense:
      return 2;
    case LayerKind::batchnorm:
      return 4;
    default:
      return 0;
  }
}

std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const Shape& sample_shape) {
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur = sample_shape;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (cur.size() != 3) chain_error(l, cur, "expects C x H x W");
        if (l.kernel == 0 || l.stride == 0 || l.out_channels == 0) {
          chain_error(l, cur, "kernel, stride and channels must be >= 1");
        }
        const auto oh = conv_output_extent(cur[1], l.kernel, l.stride, l.padding);
        const auto ow = conv_output_extent(cur[2], l.kernel, l.stride, l.padding);
        if (oh == 0 || ow == 0) chain_error(l, cur, "kernel larger than padded input");
        cur = {l.out_channels, oh, ow};
        break;
      }
      case LayerKind::maxpool2d:
        if (cur.size() != 3) chain_error(l, cur, "expects C x H x W");
        if (l.kernel == 0 || l.stride == 0) chain_error(l, cur, "kernel and stride must be >= 1");
        if (cur[1] < l.kernel || cur[2] < l.kernel) chain_error(l, cur, "window larger than input");
        cur = {cur[0], (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) chain_error(l, cur, "dropout rate outside [0, 1)");
        break;
      case LayerKind::batchnorm:
        if (cur.size() != 1 && cur.size() != 3) chain_error(l, cur, "expects C or C x H x W");
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::dense:
        if (cur.size() != 1) chain_error(l, cur, "expects a flat feature vector");
        if (l.units == 0) chain_error(l, cur, "units must be >= 1");
        cur = {l.units};
        break;
      case LayerKind::softmax_xent:
        chain_error(l, cur, "the loss is not part of the layer list");
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::vector<std::pair<std::string, Shape>> param_shapes(const std::vector<LayerSpec>& layers,
                                                        const Shape& sample_shape) {
  const auto shapes = infer_shapes(layers, sample_shape);
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const Shape& in = i == 0 ? sample_shape : shapes[i - 1];
    switch (l.kind) {
      case LayerKind::conv2d:
        out.emplace_back(l.name + ".weight", Shape{l.out_channels, in[0], l.kernel, l.kernel});
        out.emplace_back(l.name + ".bias", Shape{l.out_channels});
        break;
      case LayerKind::dense:
        out.emplace_back(l.name + ".weight", Shape{in[0], l.units});
        out.emplace_back(l.name + ".bias", Shape{l.units});
        break;
      case LayerKind::batchnorm:
        for (const char* suffix : {".gamma", ".beta", ".running_mean", ".running_var"}) {
          out.emplace_back(l.name + suffix, Shape{in[0]});
        }
        break;
      default:
        break;
    }
  }
  return out;
}

ParamList init_params(const std::vector<LayerSpec>& layers, const Shape& sample_shape, Rng& rng) {
  ParamList params;
  for (auto& [name, shape] : param_shapes(layers, sample_shape)) {
    const auto dot = name.rfind('.');
    const std::string role = name.substr(dot + 1);
    NamedTensor t{name, Tensor(shape, 0.0), true};
    if (role == "weight") {
      const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& v : t.value.data()) v = sd * rng.normal();
    } else if (role == "gamma" || role == "running_var") {
      t.value = Tensor(shape, 1.0);
    }
    t.trainable = role != "running_mean" && role != "running_var";
    params.push_back(std::move(t));
  }
  return params;
}

ForwardTrace sequential_forward(const std::vector<LayerSpec>& layers, const ParamList& params,
                                const Tensor& batch, Mode mode, Rng& rng, bool keep_caches,
                                const std::vector<LayerCache>* routing, ParamList* stats_sink) {
  if (routing && (mode != Mode::train || routing->size() != layers.size())) {
    fail(Errc::invalid_argument, "routing replay needs train mode and one cache per layer");
  }
  ForwardTrace trace;
  if (keep_caches) trace.caches.reserve(layers.size());
  Tensor x = batch;
  std::size_t p = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    LayerOutput step;
    switch (l.kind) {
      case LayerKind::conv2d: {
        ConvParams cp{params[p].value, params[p + 1].value, l.stride, l.padding};
        step = conv2d_forward(x, cp);
        break;
      }
      case LayerKind::dense:
        step = dense_forward(x, params[p].value, params[p + 1].value);
        break;
      case LayerKind::batchnorm: {
        auto state = bn_state(l, params, p);
        step = batchnorm_forward(x, state, mode);
        if (mode == Mode::train && !routing && stats_sink) {
          (*stats_sink)[p + 2].value = std::move(state.running_mean);
          (*stats_sink)[p + 3].value = std::move(state.running_var);
        }
        break;
      }
      case LayerKind::relu:
        if (routing) {
          step.output = relu_replay(x, (*routing)[i]);
        } else {
          step = relu_forward(x);
        }
        break;
      case LayerKind::maxpool2d:
        if (routing) {
          step.output = maxpool_replay(x, (*routing)[i]);
        } else {
          step = maxpool_forward(x, l.kernel, l.stride);
        }
        break;
      case LayerKind::dropout:
        if (routing) {
          step.output = dropout_replay(x, (*routing)[i]);
        } else {
          step = dropout_forward(x, l.rate, mode, rng);
        }
        break;
      case LayerKind::flatten: {
        step.cache.kind = LayerKind::flatten;
        step.cache.input_shape = x.shape();
        const std::size_t n = x.dim(0);
        step.output = std::move(x).reshaped({n, shape_size(step.cache.input_shape) / n});
        break;
      }
      case LayerKind::softmax_xent:
        fail(Errc::invalid_argument, "softmax_xent is applied by the caller, not the layer list");
    }
    p += param_count(l.kind);
    x = std::move(step.output);
    if (keep_caches) trace.caches.push_back(std::move(step.cache));
  }
  trace.output = std::move(x);
  return trace;
}

BackwardResult sequential_backward(const std::vector<LayerSpec>& layers, const ParamList& params,
                                   const std::vector<LayerCache>& caches, const Tensor& upstream,
                                   bool want_input_grad) {
  if (caches.size() != layers.size()) {
    fail(Errc::invalid_argument, "backward needs one cache per layer");
  }
  std::vector<std::size_t> offsets(layers.size());
  std::size_t p = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    offsets[i] = p;
    p += param_count(layers[i].kind);
  }
  if (p != params.size()) fail(Errc::dimension, "parameter list does not match layer list");

  BackwardResult res;
  res.param_grads.resize(params.size());
  Tensor grad = upstream;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const bool need_input = i > 0 || want_input_grad;
    auto g = layer_backward(layers[i].kind, caches[i], grad, need_input);
    for (std::size_t j = 0; j < g.params.size(); ++j) {
      res.param_grads[offsets[i] + j] = std::move(g.params[j]);
    }
    grad = std::move(g.input);
  }
  if (want_input_grad) res.input = std::move(grad);
  return res;
}

GradCheckResult gradient_check(const std::vector<LayerSpec>& layers, const ParamList& params,
                               const Tensor& input,
                               const std::optional<std::vector<std::size_t>>& labels,
                               const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    fail(Errc::invalid_argument, "gradient check epsilon must lie in [1e-7, 1e-3]");
  }
  ParamList work = params;
  Rng rng(options.seed);
  auto trace = sequential_forward(layers, work, input, Mode::train, rng, true);

  Tensor projection;
  if (!labels) {
    projection = Tensor(trace.output.shape());
    Rng prng(mix_seed(options.seed, 1));
    for (double& v : projection.data()) v = prng.uniform() * 2.0 - 1.0;
  }
  Tensor upstream;
  loss_and_grad(trace.output, labels, projection, &upstream);
  const auto analytic = sequential_backward(layers, work, trace.caches, upstream, true);

  Tensor x = input;
  auto evaluate = [&](const std::string& what, std::size_t idx) {
    Rng unused(0);
    auto out = sequential_forward(layers, work, x, Mode::train, unused, false, &trace.caches);
    const double loss = loss_and_grad(out.output, labels, projection, nullptr);
    if (!std::isfinite(loss)) {
      fail(Errc::numeric, "non-finite loss while perturbing " + what + "[" + std::to_string(idx) +
                              "]");
    }
    return loss;
  };

  GradCheckResult result;
  auto check = [&](const std::string& what, double& slot, double analytic_value, std::size_t idx) {
    const double saved = slot;
    slot = saved + options.epsilon;
    const double plus = evaluate(what, idx);
    slot = saved - options.epsilon;
    const double minus = evaluate(what, idx);
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double denom = std::max({std::abs(analytic_value), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic_value - numeric) / denom;
    ++result.coordinates_checked;
    if (result.worst_tensor.empty() || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_tensor = what;
      result.worst_index = idx;
      result.worst_analytic = analytic_value;
      result.worst_numeric = numeric;
    }
  };

  for (std::size_t j = 0; j < work.size(); ++j) {
    if (!work[j].trainable) continue;
    auto& tensor = work[j].value;
    const auto& grad = analytic.param_grads[j];
    for (auto idx : pick_coordinates(tensor.size(), options.max_coords_per_tensor,
                                     mix_seed(options.seed, 100 + j))) {
      check(work[j].name, tensor[idx], grad[idx], idx);
    }
  }
  for (auto idx : pick_coordinates(x.size(), options.max_coords_per_tensor,
                                   mix_seed(options.seed, 99))) {
    check("input", x[idx], analytic.input[idx], idx);
  }
  return result;
}

}  // namespace ddnet::nn
