#include "models/model.hpp"

#include "core/error.hpp"

namespace ddnet::models {
namespace {

using nn::LayerKind;
using nn::LayerSpec;

struct ConvStage {
  std::size_t kernel;
  std::size_t channels;
};

struct DenseStage {
  std::size_t units;
  double dropout;
};

std::vector<LayerSpec> assemble(const std::vector<ConvStage>& convs,
                                const std::vector<DenseStage>& dense, std::size_t classes) {
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto n = std::to_string(i + 1);
    LayerSpec conv{.kind = LayerKind::conv2d, .name = "conv" + n};
    conv.out_channels = convs[i].channels;
    conv.kernel = convs[i].kernel;
    conv.stride = 1;
    conv.padding = nn::Padding::same(convs[i].kernel);
    layers.push_back(conv);
    layers.push_back({.kind = LayerKind::relu, .name = "relu" + n});
    layers.push_back({.kind = LayerKind::maxpool2d, .name = "pool" + n, .kernel = 3, .stride = 2});
  }
  layers.push_back({.kind = LayerKind::batchnorm, .name = "bn"});
  layers.push_back({.kind = LayerKind::flatten, .name = "flatten"});
  std::size_t dropouts = 0;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const auto n = std::to_string(i + 1);
    layers.push_back({.kind = LayerKind::dense, .name = "fc" + n, .units = dense[i].units});
    layers.push_back({.kind = LayerKind::relu, .name = "fc" + n + "_relu"});
    if (dense[i].dropout > 0.0) {
      layers.push_back({.kind = LayerKind::dropout,
                        .name = "drop" + std::to_string(++dropouts),
                        .rate = dense[i].dropout});
    }
  }
  layers.push_back({.kind = LayerKind::dense,
                    .name = "fc" + std::to_string(dense.size() + 1),
                    .units = classes});
  return layers;
}

}  // namespace

const char* arch_name(ArchId arch) {
  switch (arch) {
    case ArchId::cnn1: return "cnn1";
    case ArchId::cnn2: return "cnn2";
    case ArchId::cnn3: return "cnn3";
  }
  return "?";
}

ArchId arch_from_name(const std::string& name) {
  if (name == "cnn1") return ArchId::cnn1;
  if (name == "cnn2") return ArchId::cnn2;
  if (name == "cnn3") return ArchId::cnn3;
  fail(Errc::invalid_argument, "unknown architecture '" + name + "' (expected cnn1, cnn2, cnn3)");
}

ModelSpec model_spec(ArchId arch, std::size_t channels) {
  if (channels != 1 && channels != 3) fail(Errc::invalid_argument, "input channels must be 1 or 3");
  ModelSpec spec;
  spec.arch = arch;
  spec.input_shape = {channels, 90, 90};
  spec.num_classes = 2;
  switch (arch) {
    case ArchId::cnn1:
      spec.layers = assemble({{3, 16}, {3, 32}, {3, 64}}, {{192, 0.5}, {96, 0.5}}, 2);
      break;
    case ArchId::cnn2:
      spec.layers = assemble({{3, 3}, {4, 16}, {3, 32}, {3, 64}},
                             {{348, 0.0}, {192, 0.0}, {96, 0.0}}, 2);
      break;
    case ArchId::cnn3:
      spec.layers = assemble({{3, 8}, {3, 16}, {6, 16}, {3, 32}, {12, 32}},
                             {{796, 0.6}, {348, 0.6}, {192, 0.0}, {96, 0.0}}, 2);
      break;
  }
  validate_spec(spec);
  return spec;
}

void validate_spec(const ModelSpec& spec) {
  const auto shapes = nn::infer_shapes(spec.layers, spec.input_shape);
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::dense ||
      shapes.back() != nn::Shape{spec.num_classes}) {
    fail(Errc::dimension, "model must end in a dense layer with " +
                              std::to_string(spec.num_classes) + " outputs");
  }
}

std::size_t flatten_size(const ModelSpec& spec) {
  const auto shapes = nn::infer_shapes(spec.layers, spec.input_shape);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::flatten) return shapes[i][0];
  }
  fail(Errc::dimension, "model has no flatten layer");
}

Model build_model(ArchId arch, std::uint64_t seed, std::size_t channels) {
  Model m{model_spec(arch, channels), {}};
  Rng rng(seed);
  m.params = nn::init_params(m.spec.layers, m.spec.input_shape, rng);
  return m;
}

void set_dropout_rate(ModelSpec& spec, const std::string& layer, double rate) {
  for (auto& l : spec.layers) {
    if (l.name == layer && l.kind == LayerKind::dropout) {
      if (!(rate >= 0.0 && rate < 1.0)) {
        fail(Errc::invalid_argument, "dropout rate for '" + layer + "' must lie in [0, 1)");
      }
      l.rate = rate;
      return;
    }
  }
  fail(Errc::invalid_argument, std::string("architecture ") + arch_name(spec.arch) +
                                   " has no dropout layer named '" + layer + "'");
}

namespace {

void check_batch(const Model& model, const nn::Tensor& batch) {
  const auto& in = model.spec.input_shape;
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2]) {
    fail(Errc::dimension, "batch " + nn::shape_string(batch.shape()) + " does not match model input " +
                              nn::shape_string(in));
  }
}

}  // namespace

nn::ForwardTrace model_forward(Model& model, const nn::Tensor& batch, nn::Mode mode, Rng& rng) {
  check_batch(model, batch);
  const bool train = mode == nn::Mode::train;
  return nn::sequential_forward(model.spec.layers, model.params, batch, mode, rng, train, nullptr,
                                train ? &model.params : nullptr);
}

nn::Tensor predict_logits(const Model& model, const nn::Tensor& batch) {
  check_batch(model, batch);
  Rng unused(0);
  return nn::sequential_forward(model.spec.layers, model.params, batch, nn::Mode::infer, unused,
                                false)
      .output;
}

nn::Tensor predict_probs(const Model& model, const nn::Tensor& batch) {
  return nn::softmax(predict_logits(model, batch));
}

std::vector<std::size_t> argmax_rows(const nn::Tensor& matrix) {
  nn::require_rank(matrix, 2, "argmax_rows");
  std::vector<std::size_t> out(matrix.dim(0), 0);
  for (std::size_t r = 0; r < matrix.dim(0); ++r) {
    for (std::size_t c = 1; c < matrix.dim(1); ++c) {
      if (matrix.at(r, c) > matrix.at(r, out[r])) out[r] = c;
    }
  }
  return out;
}

}  // namespace ddnet::models
