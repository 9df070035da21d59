#include "ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "models/checkpoint.hpp"
#include "models/training.hpp"

namespace ddnet::ensemble {
namespace {

void check_threshold(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    fail(Errc::invalid_argument, "threshold must lie in [0, 1]");
  }
}

// Mean that is independent of member order and returns x exactly for K
// copies of x: values are sorted, summed with Neumaier compensation, and the
// quotient is corrected by the exactly representable division remainder.
double mean_of(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  const double k = static_cast<double>(values.size());
  const double q = sum / k;
  const double remainder = std::fma(-q, k, sum) + comp;
  return q + remainder / k;
}

}  // namespace

EnsembleConfig parse_ensemble_config(const nlohmann::json& config,
                                     const std::filesystem::path& base_dir) {
  EnsembleConfig out;
  try {
    const auto& e = config.at("ensemble");
    for (const auto& m : e.at("members")) {
      std::filesystem::path p(m.get<std::string>());
      out.members.push_back(p.is_absolute() ? p : base_dir / p);
    }
    if (e.contains("threshold")) out.threshold = e.at("threshold").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::parse, std::string("ensemble config: ") + ex.what());
  }
  if (out.members.empty()) fail(Errc::parse, "ensemble config lists no members");
  check_threshold(out.threshold);
  return out;
}

EnsembleConfig load_ensemble_config(const std::filesystem::path& path) {
  return parse_ensemble_config(models::load_json_file(path), path.parent_path());
}

nn::Tensor ensemble_average(const std::vector<nn::Tensor>& member_probs) {
  if (member_probs.empty()) fail(Errc::invalid_argument, "ensemble needs at least one member");
  const auto& shape = member_probs.front().shape();
  for (const auto& p : member_probs) {
    if (p.shape() != shape || p.rank() != 2) {
      fail(Errc::dimension, "member probabilities disagree in shape: " + nn::shape_string(shape) +
                                " vs " + nn::shape_string(p.shape()));
    }
    for (std::size_t r = 0; r < p.dim(0); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p.dim(1); ++c) s += p.at(r, c);
      if (std::abs(s - 1.0) > 1e-9) {
        fail(Errc::invalid_argument, "member probability row " + std::to_string(r) +
                                         " does not sum to 1");
      }
    }
  }
  nn::Tensor avg(shape, 0.0);
  std::vector<double> values(member_probs.size());
  for (std::size_t i = 0; i < avg.size(); ++i) {
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = member_probs[k][i];
    avg[i] = mean_of(values);
  }
  return avg;
}

std::vector<data::Label> classify_threshold(const nn::Tensor& avg_probs, double threshold) {
  check_threshold(threshold);
  if (avg_probs.rank() != 2 || avg_probs.dim(1) != data::kNumClasses) {
    fail(Errc::dimension, "expected N x 2 probabilities, got " + nn::shape_string(avg_probs.shape()));
  }
  const std::size_t drowsy = data::class_index(data::Label::drowsy);
  std::vector<data::Label> out;
  out.reserve(avg_probs.dim(0));
  for (std::size_t r = 0; r < avg_probs.dim(0); ++r) {
    out.push_back(avg_probs.at(r, drowsy) > threshold ? data::Label::drowsy : data::Label::alert);
  }
  return out;
}

Ensemble::Ensemble(std::vector<models::Model> members, std::vector<std::string> names)
    : members_(std::move(members)), names_(std::move(names)) {
  if (members_.empty()) fail(Errc::invalid_argument, "ensemble needs at least one member");
  for (const auto& m : members_) {
    if (m.spec.input_shape != members_.front().spec.input_shape ||
        m.spec.num_classes != members_.front().spec.num_classes) {
      fail(Errc::dimension, "ensemble members disagree on input shape or class count");
    }
  }
  if (names_.empty()) {
    for (std::size_t i = 0; i < members_.size(); ++i) {
      names_.push_back(std::string("Net") + std::to_string(i + 1));
    }
  }
  if (names_.size() != members_.size()) fail(Errc::invalid_argument, "one name per member required");
}

Ensemble Ensemble::load(const EnsembleConfig& config) {
  std::vector<models::Model> members;
  std::vector<std::string> names;
  for (const auto& path : config.members) {
    members.push_back(models::load_checkpoint(path));
    names.push_back(path.stem().string());
  }
  return Ensemble(std::move(members), std::move(names));
}

std::vector<nn::Tensor> Ensemble::member_probs(const data::DatasetManifest& manifest,
                                               const std::vector<std::size_t>& samples,
                                               data::ImageStore& store) const {
  std::vector<nn::Tensor> out;
  for (const auto& m : members_) out.push_back(models::predict_samples(m, manifest, samples, store));
  return out;
}

EnsembleEvaluation evaluate_ensemble(const Ensemble& ensemble, const data::DatasetManifest& manifest,
                                     const std::vector<std::size_t>& samples,
                                     data::ImageStore& store, double threshold) {
  const auto probs = ensemble.member_probs(manifest, samples, store);
  EnsembleEvaluation out;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const auto pred = models::argmax_rows(probs[k]);
    metrics::ConfusionMatrix cm(models::class_names());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      cm.add(data::class_index(manifest.samples[samples[i]].label), pred[i]);
    }
    out.members.push_back({ensemble.names()[k], std::move(cm)});
  }
  const auto labels = classify_threshold(ensemble_average(probs), threshold);
  metrics::ConfusionMatrix cm(models::class_names());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    cm.add(data::class_index(manifest.samples[samples[i]].label), data::class_index(labels[i]));
  }
  out.ensemble = {"Ensemble", std::move(cm)};
  return out;
}

}  // namespace ddnet::ensemble
