#include "models/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/error.hpp"

namespace ddnet::models {
namespace {

constexpr std::size_t kEvalChunk = 32;

TrainConfig make(ArchId arch, optim::OptimizerKind opt, double lr, double momentum,
                 std::size_t batch, std::size_t epochs, std::size_t iterations) {
  TrainConfig c;
  c.arch = arch;
  c.optimizer = opt;
  c.hyper.learning_rate = lr;
  c.hyper.momentum = momentum;
  c.batch_size = batch;
  c.epochs = epochs;
  c.max_iterations = iterations;
  return c;
}

template <typename T>
T get_number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) fail(Errc::parse, std::string("config key '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
      fail(Errc::parse, std::string("config key '") + key + "' must be a non-negative integer");
    }
  }
  return v.get<T>();
}

}  // namespace

TrainConfig preset(const std::string& name) {
  using optim::OptimizerKind;
  if (name == "section3-cnn1") return make(ArchId::cnn1, OptimizerKind::sgd_momentum, 1e-3, 0.9, 32, 4, 2416);
  if (name == "section3-cnn2") return make(ArchId::cnn2, OptimizerKind::adam, 1e-3, 0.9, 32, 4, 2416);
  if (name == "section3-cnn3") return make(ArchId::cnn3, OptimizerKind::sgd_momentum, 1e-3, 0.9, 64, 4, 2816);
  if (name == "methodology-cnn1") return make(ArchId::cnn1, OptimizerKind::sgd_momentum, 1e-3, 0.0, 32, 0, 1200);
  if (name == "methodology-cnn2") return make(ArchId::cnn2, OptimizerKind::adam, 1e-4, 0.9, 64, 0, 1250);
  fail(Errc::invalid_argument, "unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"section3-cnn1", "section3-cnn2", "section3-cnn3", "methodology-cnn1", "methodology-cnn2"};
}

TrainConfig default_config(ArchId arch) { return preset(std::string("section3-") + arch_name(arch)); }

TrainConfig config_from_json(const nlohmann::json& json, TrainConfig base) {
  if (!json.is_object()) fail(Errc::parse, "config must be a JSON object");
  try {
    if (json.contains("preset")) base = preset(json.at("preset").get<std::string>());
    for (const auto& [key, value] : json.items()) {
      if (key == "preset" || key == "ensemble") continue;
      if (key == "arch") {
        base.arch = arch_from_name(value.get<std::string>());
      } else if (key == "optimizer") {
        base.optimizer = optim::optimizer_from_name(value.get<std::string>());
      } else if (key == "learning_rate") {
        base.hyper.learning_rate = get_number<double>(json, "learning_rate");
      } else if (key == "momentum") {
        base.hyper.momentum = get_number<double>(json, "momentum");
      } else if (key == "beta1") {
        base.hyper.beta1 = get_number<double>(json, "beta1");
      } else if (key == "beta2") {
        base.hyper.beta2 = get_number<double>(json, "beta2");
      } else if (key == "epsilon") {
        base.hyper.epsilon = get_number<double>(json, "epsilon");
      } else if (key == "batch_size") {
        base.batch_size = get_number<std::size_t>(json, "batch_size");
      } else if (key == "epochs") {
        base.epochs = get_number<std::size_t>(json, "epochs");
      } else if (key == "max_iterations") {
        base.max_iterations = get_number<std::size_t>(json, "max_iterations");
      } else if (key == "seed") {
        base.seed = get_number<std::uint64_t>(json, "seed");
      } else if (key == "eval_every") {
        base.eval_every = get_number<std::size_t>(json, "eval_every");
      } else if (key == "dropout_overrides") {
        if (!value.is_object()) fail(Errc::parse, "dropout_overrides must map layer names to rates");
        for (const auto& [layer, rate] : value.items()) {
          if (!rate.is_number()) fail(Errc::parse, "dropout rate for '" + layer + "' must be a number");
          base.dropout_overrides[layer] = rate.get<double>();
        }
      } else {
        fail(Errc::parse, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("config: ") + e.what());
  }
  return base;
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, "'" + path.string() + "': " + e.what());
  }
}

void validate_config(const TrainConfig& c) {
  if (c.batch_size == 0) fail(Errc::invalid_argument, "batch_size must be >= 1");
  if (c.max_iterations == 0) fail(Errc::invalid_argument, "max_iterations must be >= 1");
  if (c.eval_every == 0) fail(Errc::invalid_argument, "eval_every must be >= 1");
  if (!(c.hyper.learning_rate > 0.0)) fail(Errc::invalid_argument, "learning_rate must be > 0");
  if (!(c.hyper.momentum >= 0.0 && c.hyper.momentum < 1.0)) {
    fail(Errc::invalid_argument, "momentum must lie in [0, 1)");
  }
  if (!(c.hyper.beta1 >= 0.0 && c.hyper.beta1 < 1.0) || !(c.hyper.beta2 >= 0.0 && c.hyper.beta2 < 1.0)) {
    fail(Errc::invalid_argument, "beta1 and beta2 must lie in [0, 1)");
  }
  if (!(c.hyper.epsilon > 0.0)) fail(Errc::invalid_argument, "epsilon must be > 0");
}

std::string format_history_csv(const TrainHistory& history) {
  std::string out = "iteration,train_loss,train_acc,val_acc\n";
  char buf[160];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", e.iteration, e.train_loss,
                  e.train_accuracy, e.validation_accuracy);
    out += buf;
  }
  return out;
}

std::size_t planned_iterations(const TrainConfig& config, std::size_t train_samples) {
  if (config.epochs == 0) return config.max_iterations;
  const std::size_t steps = (train_samples + config.batch_size - 1) / config.batch_size;
  return std::min(config.epochs * steps, config.max_iterations);
}

TrainHistory train(Model& model, const data::DatasetManifest& manifest, const TrainConfig& config,
                   data::ImageStore& store, const ProgressFn& progress) {
  validate_config(config);
  for (const auto& [layer, rate] : config.dropout_overrides) {
    set_dropout_rate(model.spec, layer, rate);
  }
  const auto train_idx = manifest.indices(data::Split::train);
  const auto val_idx = manifest.indices(data::Split::validation);
  if (train_idx.empty()) fail(Errc::empty_split, "train split is empty");
  if (val_idx.empty()) fail(Errc::empty_split, "validation split is empty");

  auto opt = optim::OptimizerState::create(config.optimizer, config.hyper, model.params);
  Rng dropout_rng(mix_seed(config.seed, 0xD0));
  const std::size_t total = planned_iterations(config, train_idx.size());

  TrainHistory history;
  std::size_t it = 0;
  double loss_sum = 0.0, acc_sum = 0.0;
  std::size_t steps_since = 0;
  for (std::uint64_t epoch = 0; it < total; ++epoch) {
    data::BatchSequence batches(manifest, data::Split::train, config.batch_size, config.seed, epoch,
                                store);
    for (std::size_t b = 0; b < batches.size() && it < total; ++b) {
      const auto batch = batches[b];
      auto trace = model_forward(model, batch.images, nn::Mode::train, dropout_rng);
      const auto sx = nn::softmax_cross_entropy(trace.output, batch.labels);
      if (!std::isfinite(sx.loss)) {
        fail(Errc::numeric, "non-finite loss at iteration " + std::to_string(it + 1));
      }
      const auto grads = nn::sequential_backward(model.spec.layers, model.params, trace.caches,
                                                 sx.grad_logits, false);
      optim::step(model.params, grads.param_grads, opt);
      ++it;

      const auto pred = argmax_rows(sx.probs);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
      loss_sum += sx.loss;
      acc_sum += static_cast<double>(correct) / static_cast<double>(pred.size());
      ++steps_since;

      if (it % config.eval_every == 0 || it == total) {
        HistoryEntry e;
        e.iteration = it;
        e.train_loss = loss_sum / static_cast<double>(steps_since);
        e.train_accuracy = acc_sum / static_cast<double>(steps_since);
        e.validation_accuracy = metrics::accuracy(evaluate(model, manifest, val_idx, store));
        history.push_back(e);
        if (progress) progress(e);
        loss_sum = acc_sum = 0.0;
        steps_since = 0;
      }
    }
  }
  return history;
}

std::vector<std::string> class_names() {
  return {data::label_name(data::Label::alert), data::label_name(data::Label::drowsy)};
}

nn::Tensor predict_samples(const Model& model, const data::DatasetManifest& manifest,
                           const std::vector<std::size_t>& samples, data::ImageStore& store) {
  if (samples.empty()) fail(Errc::empty_split, "no samples to predict");
  nn::Tensor probs({samples.size(), model.spec.num_classes});
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    const std::vector<std::size_t> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                         samples.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = data::load_batch(manifest, chunk, store);
    const auto p = predict_probs(model, batch.images);
    std::copy(p.data().begin(), p.data().end(), probs.raw() + start * model.spec.num_classes);
  }
  return probs;
}

metrics::ConfusionMatrix evaluate(const Model& model, const data::DatasetManifest& manifest,
                                  const std::vector<std::size_t>& samples, data::ImageStore& store) {
  const auto probs = predict_samples(model, manifest, samples, store);
  const auto pred = argmax_rows(probs);
  metrics::ConfusionMatrix cm(class_names());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    cm.add(data::class_index(manifest.samples[samples[i]].label), pred[i]);
  }
  return cm;
}

}  // namespace ddnet::models
