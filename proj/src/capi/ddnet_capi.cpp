#include "ddnet/ddnet.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "core/error.hpp"
#include "data/manifest.hpp"
#include "ensemble/ensemble.hpp"
#include "metrics/metrics.hpp"
#include "models/checkpoint.hpp"
#include "models/training.hpp"
#include "models/verify.hpp"

using namespace ddnet;

struct ddnet_model {
  models::Model model;
};

struct ddnet_manifest {
  data::DatasetManifest manifest;
};

struct ddnet_config {
  models::TrainConfig config;
};

struct ddnet_ensemble {
  ensemble::Ensemble ensemble;
  double threshold;
};

struct ddnet_report {
  std::vector<metrics::NamedMatrix> rows;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ddnet_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DDNET_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<ddnet_status>(e.category());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DDNET_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DDNET_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(Errc::invalid_argument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::size_t> split_samples(const data::DatasetManifest& m, ddnet_split split) {
  std::vector<std::size_t> idx;
  switch (split) {
    case DDNET_SPLIT_ALL:
      for (std::size_t i = 0; i < m.samples.size(); ++i) idx.push_back(i);
      break;
    case DDNET_SPLIT_TRAIN: idx = m.indices(data::Split::train); break;
    case DDNET_SPLIT_VALIDATION: idx = m.indices(data::Split::validation); break;
    case DDNET_SPLIT_TEST: idx = m.indices(data::Split::test); break;
    default: fail(Errc::invalid_argument, "unknown split");
  }
  if (idx.empty()) fail(Errc::empty_split, "selected split has no samples");
  return idx;
}

// Manifests without a split column get the default seeded 70/15/15 split.
constexpr std::uint64_t kAutoSplitSeed = 42;

data::DatasetManifest with_splits(const data::DatasetManifest& m) {
  return m.has_splits() ? m : data::split_dataset(m, {}, kAutoSplitSeed, true);
}

// Drowsy first, matching the usual comparison-table layout.
metrics::ReportOptions report_options() {
  return {{data::class_index(data::Label::drowsy), data::class_index(data::Label::alert)}};
}

}  // namespace

extern "C" {

const char* ddnet_last_error(void) { return g_last_error.c_str(); }

const char* ddnet_version(void) { return "1.0.0"; }

void ddnet_string_free(char* s) { std::free(s); }

ddnet_status ddnet_split_from_name(const char* name, ddnet_split* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    const std::string n(name);
    if (n == "all") {
      *out = DDNET_SPLIT_ALL;
      return;
    }
    switch (data::split_from_name(n)) {
      case data::Split::train: *out = DDNET_SPLIT_TRAIN; break;
      case data::Split::validation: *out = DDNET_SPLIT_VALIDATION; break;
      default: *out = DDNET_SPLIT_TEST; break;
    }
  });
}

ddnet_status ddnet_format_from_name(const char* name, ddnet_format* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = static_cast<ddnet_format>(metrics::report_format_from_name(name));
  });
}

ddnet_status ddnet_model_build(const char* arch, uint64_t seed, ddnet_model** out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = new ddnet_model{models::build_model(models::arch_from_name(arch), seed)};
  });
}

ddnet_status ddnet_model_load(const char* path, ddnet_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ddnet_model{models::load_checkpoint(path)};
  });
}

ddnet_status ddnet_model_save(const ddnet_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    models::save_checkpoint(model->model, path);
  });
}

void ddnet_model_free(ddnet_model* model) { delete model; }

const char* ddnet_model_arch(const ddnet_model* model) {
  return model ? models::arch_name(model->model.spec.arch) : "";
}

ddnet_status ddnet_model_predict(const ddnet_model* model, const double* pixels, size_t count,
                                 size_t channels, double* probs) {
  return guarded([&] {
    require(model, "model");
    require(pixels, "pixels");
    require(probs, "probs");
    const auto& in = model->model.spec.input_shape;
    if (count == 0) fail(Errc::invalid_argument, "count must be >= 1");
    if (channels != in[0]) fail(Errc::dimension, "model expects " + std::to_string(in[0]) + " channels");
    const std::size_t n = count * in[0] * in[1] * in[2];
    nn::Tensor batch({count, in[0], in[1], in[2]}, std::vector<double>(pixels, pixels + n));
    const auto p = models::predict_probs(model->model, batch);
    std::copy(p.data().begin(), p.data().end(), probs);
  });
}

ddnet_status ddnet_model_predict_pgm(const ddnet_model* model, const char* path, int* label,
                                     double* p_drowsy) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    const auto& in = model->model.spec.input_shape;
    auto px = data::to_network_input(data::load_pgm(path), in[0]);
    nn::Tensor batch({1, in[0], in[1], in[2]}, std::move(px));
    const auto p = models::predict_probs(model->model, batch);
    const auto cls = models::argmax_rows(p)[0];
    if (label) *label = static_cast<int>(data::label_from_index(cls));
    if (p_drowsy) *p_drowsy = p.at(0, data::class_index(data::Label::drowsy));
  });
}

ddnet_status ddnet_manifest_load(const char* path, int check_files, ddnet_manifest** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    data::ManifestOptions opts;
    opts.check_files = check_files != 0;
    *out = new ddnet_manifest{data::load_manifest(path, opts)};
  });
}

void ddnet_manifest_free(ddnet_manifest* manifest) { delete manifest; }

size_t ddnet_manifest_size(const ddnet_manifest* manifest) {
  return manifest ? manifest->manifest.samples.size() : 0;
}

int ddnet_manifest_has_splits(const ddnet_manifest* manifest) {
  return manifest && manifest->manifest.has_splits() ? 1 : 0;
}

ddnet_status ddnet_manifest_split(ddnet_manifest* manifest, uint64_t seed, int stratified) {
  return guarded([&] {
    require(manifest, "manifest");
    manifest->manifest = data::split_dataset(manifest->manifest, {}, seed, stratified != 0);
  });
}

ddnet_status ddnet_manifest_save(const ddnet_manifest* manifest, const char* path) {
  return guarded([&] {
    require(manifest, "manifest");
    require(path, "path");
    data::save_manifest(manifest->manifest, path);
  });
}

size_t ddnet_manifest_count(const ddnet_manifest* manifest, ddnet_split split, int label) {
  if (manifest == nullptr) return 0;
  std::size_t n = 0;
  for (const auto& s : manifest->manifest.samples) {
    const bool split_ok = split == DDNET_SPLIT_ALL ||
                          (split == DDNET_SPLIT_TRAIN && s.split == data::Split::train) ||
                          (split == DDNET_SPLIT_VALIDATION && s.split == data::Split::validation) ||
                          (split == DDNET_SPLIT_TEST && s.split == data::Split::test);
    if (split_ok && (label == 0 || static_cast<int>(s.label) == label)) ++n;
  }
  return n;
}

ddnet_status ddnet_config_create(const char* preset_or_arch, ddnet_config** out) {
  return guarded([&] {
    require(preset_or_arch, "preset_or_arch");
    require(out, "out");
    const std::string name(preset_or_arch);
    const bool is_arch = name == "cnn1" || name == "cnn2" || name == "cnn3";
    *out = new ddnet_config{is_arch ? models::default_config(models::arch_from_name(name))
                                    : models::preset(name)};
  });
}

ddnet_status ddnet_config_merge_json(ddnet_config* config, const char* json_text) {
  return guarded([&] {
    require(config, "config");
    require(json_text, "json_text");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse, std::string("config: ") + e.what());
    }
    config->config = models::config_from_json(j, config->config);
  });
}

ddnet_status ddnet_config_merge_file(ddnet_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->config = models::config_from_json(models::load_json_file(path), config->config);
  });
}

void ddnet_config_set_seed(ddnet_config* config, uint64_t seed) {
  if (config) config->config.seed = seed;
}

const char* ddnet_config_arch(const ddnet_config* config) {
  return config ? models::arch_name(config->config.arch) : "";
}

uint64_t ddnet_config_seed(const ddnet_config* config) { return config ? config->config.seed : 0; }

void ddnet_config_free(ddnet_config* config) { delete config; }

ddnet_status ddnet_train(ddnet_model* model, const ddnet_manifest* manifest,
                         const ddnet_config* config, const char* history_path,
                         double* final_val_accuracy) {
  return guarded([&] {
    require(model, "model");
    require(manifest, "manifest");
    require(config, "config");
    if (model->model.spec.arch != config->config.arch) {
      fail(Errc::invalid_argument, std::string("config is for ") + models::arch_name(config->config.arch) +
                                       " but the model is " + models::arch_name(model->model.spec.arch));
    }
    const auto split = with_splits(manifest->manifest);
    data::ImageStore store(split, model->model.spec.input_shape[0]);
    const auto history = models::train(model->model, split, config->config, store);
    if (history_path) {
      std::ofstream out(history_path, std::ios::binary);
      if (!out) fail(Errc::io, std::string("cannot write history '") + history_path + "'");
      out << models::format_history_csv(history);
    }
    if (final_val_accuracy) *final_val_accuracy = history.back().validation_accuracy;
  });
}

ddnet_status ddnet_report_create(ddnet_report** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ddnet_report{};
  });
}

void ddnet_report_free(ddnet_report* report) { delete report; }

size_t ddnet_report_rows(const ddnet_report* report) { return report ? report->rows.size() : 0; }

ddnet_status ddnet_report_accuracy(const ddnet_report* report, size_t index, double* out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    if (index >= report->rows.size()) fail(Errc::invalid_argument, "report row out of range");
    *out = metrics::accuracy(report->rows[index].matrix);
  });
}

ddnet_status ddnet_report_render(const ddnet_report* report, ddnet_format format, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(metrics::report(report->rows, static_cast<metrics::ReportFormat>(format),
                                      report_options()));
  });
}

ddnet_status ddnet_evaluate(const ddnet_model* model, const ddnet_manifest* manifest,
                            ddnet_split split, const char* name, ddnet_report* report) {
  return guarded([&] {
    require(model, "model");
    require(manifest, "manifest");
    require(report, "report");
    const auto m = with_splits(manifest->manifest);
    const auto idx = split_samples(m, split);
    data::ImageStore store(m, model->model.spec.input_shape[0]);
    auto cm = models::evaluate(model->model, m, idx, store);
    report->rows.push_back({name ? name : models::arch_name(model->model.spec.arch), std::move(cm)});
  });
}

ddnet_status ddnet_ensemble_load(const char* config_path, ddnet_ensemble** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    const auto cfg = ensemble::load_ensemble_config(config_path);
    *out = new ddnet_ensemble{ensemble::Ensemble::load(cfg), cfg.threshold};
  });
}

void ddnet_ensemble_free(ddnet_ensemble* e) { delete e; }

size_t ddnet_ensemble_size(const ddnet_ensemble* e) { return e ? e->ensemble.members().size() : 0; }

double ddnet_ensemble_threshold(const ddnet_ensemble* e) { return e ? e->threshold : 0.0; }

ddnet_status ddnet_ensemble_evaluate(const ddnet_ensemble* e, const ddnet_manifest* manifest,
                                     ddnet_split split, double threshold, ddnet_report* report) {
  return guarded([&] {
    require(e, "ensemble");
    require(manifest, "manifest");
    require(report, "report");
    const auto m = with_splits(manifest->manifest);
    const auto idx = split_samples(m, split);
    data::ImageStore store(m, e->ensemble.members().front().spec.input_shape[0]);
    auto res = ensemble::evaluate_ensemble(e->ensemble, m, idx, store,
                                           threshold < 0.0 ? e->threshold : threshold);
    for (auto& m : res.members) report->rows.push_back(std::move(m));
    report->rows.push_back(std::move(res.ensemble));
  });
}

ddnet_status ddnet_gradcheck(const char* arch, double epsilon, uint64_t seed, size_t batch,
                             size_t max_coords, ddnet_gradcheck_result* out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    nn::GradCheckOptions opts;
    opts.epsilon = epsilon;
    opts.seed = seed;
    opts.max_coords_per_tensor = max_coords;
    const auto r = models::gradcheck_architecture(models::arch_from_name(arch), batch, opts);
    *out = ddnet_gradcheck_result{};
    out->max_relative_error = r.max_relative_error;
    out->analytic = r.worst_analytic;
    out->numeric = r.worst_numeric;
    out->index = r.worst_index;
    out->coordinates = r.coordinates_checked;
    std::strncpy(out->tensor, r.worst_tensor.c_str(), sizeof(out->tensor) - 1);
  });
}

}  // extern "C"
