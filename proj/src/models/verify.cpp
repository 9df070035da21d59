#include "models/verify.hpp"

#include "core/error.hpp"

namespace ddnet::models {

nn::GradCheckResult gradcheck_architecture(ArchId arch, std::size_t batch,
                                           const nn::GradCheckOptions& options) {
  if (batch < 2) fail(Errc::invalid_argument, "gradient check needs a batch of at least 2");
  const Model model = build_model(arch, options.seed);
  const auto& in = model.spec.input_shape;
  nn::Tensor x({batch, in[0], in[1], in[2]});
  Rng rng(mix_seed(options.seed, 7));
  for (double& v : x.data()) v = rng.uniform();
  std::vector<std::size_t> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<std::size_t>(rng.below(model.spec.num_classes));
  return nn::gradient_check(model.spec.layers, model.params, x, labels, options);
}

}  // namespace ddnet::models
