#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/manifest.hpp"
#include "metrics/metrics.hpp"
#include "models/model.hpp"

namespace ddnet::ensemble {

inline constexpr double kDefaultThreshold = 0.5;

struct EnsembleConfig {
  std::vector<std::filesystem::path> members;  // checkpoint files, in averaging order
  double threshold = kDefaultThreshold;
};

// Reads the `ensemble: {members: [...], threshold}` object of a config file.
// Relative member paths resolve against `base_dir`.
EnsembleConfig parse_ensemble_config(const nlohmann::json& config,
                                     const std::filesystem::path& base_dir);
EnsembleConfig load_ensemble_config(const std::filesystem::path& path);

// Unweighted mean of row-stochastic N x K member probabilities, reduced in
// member order.
nn::Tensor ensemble_average(const std::vector<nn::Tensor>& member_probs);

// Drowsy iff the averaged drowsy probability strictly exceeds `threshold`.
std::vector<data::Label> classify_threshold(const nn::Tensor& avg_probs, double threshold);

class Ensemble {
 public:
  // Members must agree on input shape and class count.
  explicit Ensemble(std::vector<models::Model> members, std::vector<std::string> names = {});

  static Ensemble load(const EnsembleConfig& config);

  const std::vector<models::Model>& members() const { return members_; }
  const std::vector<std::string>& names() const { return names_; }

  // Per-member probabilities for the given samples, in member order.
  std::vector<nn::Tensor> member_probs(const data::DatasetManifest& manifest,
                                       const std::vector<std::size_t>& samples,
                                       data::ImageStore& store) const;

 private:
  std::vector<models::Model> members_;
  std::vector<std::string> names_;
};

struct EnsembleEvaluation {
  std::vector<metrics::NamedMatrix> members;  // argmax rule per member
  metrics::NamedMatrix ensemble;              // averaged + threshold rule
};

EnsembleEvaluation evaluate_ensemble(const Ensemble& ensemble, const data::DatasetManifest& manifest,
                                     const std::vector<std::size_t>& samples,
                                     data::ImageStore& store, double threshold);

}  // namespace ddnet::ensemble
