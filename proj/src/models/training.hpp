#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/manifest.hpp"
#include "metrics/metrics.hpp"
#include "models/model.hpp"
#include "optim/optimizer.hpp"

namespace ddnet::models {

struct TrainConfig {
  ArchId arch = ArchId::cnn1;
  optim::OptimizerKind optimizer = optim::OptimizerKind::sgd_momentum;
  optim::Hyper hyper;
  std::size_t batch_size = 32;
  std::size_t epochs = 4;  // 0: bounded by max_iterations only
  std::size_t max_iterations = 2416;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  std::map<std::string, double> dropout_overrides;  // dropout layer name -> rate
};

// Named hyperparameter sets: section3-cnn{1,2,3} (the executed training runs)
// and methodology-cnn{1,2} (the per-architecture descriptions).
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();
// section3 preset of an architecture.
TrainConfig default_config(ArchId arch);

// Overlays the keys present in `json` onto `base`. Recognized keys: arch,
// preset, optimizer, learning_rate, momentum, beta1, beta2, epsilon,
// batch_size, epochs, max_iterations, seed, eval_every, dropout_overrides.
// The `ensemble` key is ignored here. A `preset` key is applied first.
TrainConfig config_from_json(const nlohmann::json& json, TrainConfig base);
nlohmann::json load_json_file(const std::filesystem::path& path);

void validate_config(const TrainConfig& config);

struct HistoryEntry {
  std::size_t iteration = 0;
  double train_loss = 0.0;      // mean over steps since the previous entry
  double train_accuracy = 0.0;  // mean batch accuracy over the same steps
  double validation_accuracy = 0.0;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

using TrainHistory = std::vector<HistoryEntry>;

// Columns: iteration,train_loss,train_acc,val_acc
std::string format_history_csv(const TrainHistory& history);

// min(epochs * ceil(n_train / batch_size), max_iterations)
std::size_t planned_iterations(const TrainConfig& config, std::size_t train_samples);

using ProgressFn = std::function<void(const HistoryEntry&)>;

// Mini-batch training on the train split with validation accuracy recorded at
// every eval_every-th step and at the final step. Throws a numeric error
// naming the iteration if the loss becomes non-finite.
TrainHistory train(Model& model, const data::DatasetManifest& manifest, const TrainConfig& config,
                   data::ImageStore& store, const ProgressFn& progress = {});

std::vector<std::string> class_names();

// Inference-mode argmax predictions tallied against the manifest labels.
metrics::ConfusionMatrix evaluate(const Model& model, const data::DatasetManifest& manifest,
                                  const std::vector<std::size_t>& samples, data::ImageStore& store);

// Softmax probabilities for the given samples, evaluated in chunks.
nn::Tensor predict_samples(const Model& model, const data::DatasetManifest& manifest,
                           const std::vector<std::size_t>& samples, data::ImageStore& store);

}  // namespace ddnet::models
