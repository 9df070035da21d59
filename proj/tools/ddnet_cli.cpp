// Command-line front end. Talks to the engine only through the C API.
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ddnet/ddnet.h"

namespace {

// Thrown to unwind with a status after a failed C call.
struct Failure {
  ddnet_status status;
};

void check(ddnet_status status) {
  if (status != DDNET_OK) {
    std::fprintf(stderr, "error: %s\n", ddnet_last_error());
    throw Failure{status};
  }
}

[[noreturn]] void usage(const std::string& message) {
  std::fprintf(stderr, "error: %s\n", message.c_str());
  throw Failure{DDNET_ERR_USAGE};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};

using ModelPtr = std::unique_ptr<ddnet_model, Deleter<ddnet_model, ddnet_model_free>>;
using ManifestPtr = std::unique_ptr<ddnet_manifest, Deleter<ddnet_manifest, ddnet_manifest_free>>;
using ConfigPtr = std::unique_ptr<ddnet_config, Deleter<ddnet_config, ddnet_config_free>>;
using EnsemblePtr = std::unique_ptr<ddnet_ensemble, Deleter<ddnet_ensemble, ddnet_ensemble_free>>;
using ReportPtr = std::unique_ptr<ddnet_report, Deleter<ddnet_report, ddnet_report_free>>;

ModelPtr load_model(const std::string& path) {
  ddnet_model* m = nullptr;
  check(ddnet_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

ManifestPtr load_manifest(const std::string& path) {
  ddnet_manifest* m = nullptr;
  check(ddnet_manifest_load(path.c_str(), 1, &m));
  return ManifestPtr(m);
}

ReportPtr new_report() {
  ddnet_report* r = nullptr;
  check(ddnet_report_create(&r));
  return ReportPtr(r);
}

ddnet_split parse_split(const std::string& name) {
  ddnet_split s{};
  check(ddnet_split_from_name(name.c_str(), &s));
  return s;
}

ddnet_format parse_format(const std::string& name) {
  ddnet_format f{};
  check(ddnet_format_from_name(name.c_str(), &f));
  return f;
}

void print_report(const ddnet_report* report, ddnet_format format) {
  char* text = nullptr;
  check(ddnet_report_render(report, format, &text));
  std::fputs(text, stdout);
  ddnet_string_free(text);
}

struct TrainArgs {
  std::string arch, preset, manifest, config, out, history;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a) {
  if (a.arch.empty() && a.preset.empty() && a.config.empty()) {
    usage("train needs --arch, --preset or --config");
  }
  ddnet_config* raw = nullptr;
  check(ddnet_config_create(!a.preset.empty() ? a.preset.c_str()
                            : !a.arch.empty() ? a.arch.c_str()
                                              : "cnn1",
                            &raw));
  ConfigPtr config(raw);
  if (!a.config.empty()) check(ddnet_config_merge_file(config.get(), a.config.c_str()));
  if (!a.arch.empty() && a.arch != ddnet_config_arch(config.get())) {
    usage("--arch " + a.arch + " conflicts with the configured architecture " +
          ddnet_config_arch(config.get()));
  }
  if (a.seed) ddnet_config_set_seed(config.get(), *a.seed);

  auto manifest = load_manifest(a.manifest);
  ddnet_model* m = nullptr;
  check(ddnet_model_build(ddnet_config_arch(config.get()), ddnet_config_seed(config.get()), &m));
  ModelPtr model(m);
  const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
  double val_acc = 0.0;
  check(ddnet_train(model.get(), manifest.get(), config.get(), history.c_str(), &val_acc));
  check(ddnet_model_save(model.get(), a.out.c_str()));
  std::printf("final_val_acc=%.6f checkpoint=%s history=%s\n", val_acc, a.out.c_str(),
              history.c_str());
}

struct EvalArgs {
  std::string checkpoint, manifest, split = "test", format = "text";
};

void cmd_eval(const EvalArgs& a) {
  const auto split = parse_split(a.split);
  const auto format = parse_format(a.format);
  auto model = load_model(a.checkpoint);
  auto manifest = load_manifest(a.manifest);
  auto report = new_report();
  check(ddnet_evaluate(model.get(), manifest.get(), split, ddnet_model_arch(model.get()),
                       report.get()));
  print_report(report.get(), format);
}

struct EnsembleArgs {
  std::string config, manifest, split = "test", format = "text";
  std::optional<double> threshold;
};

void cmd_ensemble_eval(const EnsembleArgs& a) {
  const auto split = parse_split(a.split);
  const auto format = parse_format(a.format);
  ddnet_ensemble* e = nullptr;
  check(ddnet_ensemble_load(a.config.c_str(), &e));
  EnsemblePtr ensemble(e);
  auto manifest = load_manifest(a.manifest);
  auto report = new_report();
  check(ddnet_ensemble_evaluate(ensemble.get(), manifest.get(), split, a.threshold.value_or(-1.0),
                                report.get()));
  print_report(report.get(), format);
}

struct PredictArgs {
  std::string checkpoint, image;
};

void cmd_predict(const PredictArgs& a) {
  auto model = load_model(a.checkpoint);
  int label = 0;
  double p_drowsy = 0.0;
  check(ddnet_model_predict_pgm(model.get(), a.image.c_str(), &label, &p_drowsy));
  std::printf("label=%s p_drowsy=%.6f\n", label == DDNET_LABEL_DROWSY ? "Drowsy" : "Alert",
              p_drowsy);
}

constexpr double kGradcheckThreshold = 1e-4;
constexpr std::size_t kGradcheckBatch = 2;
constexpr std::size_t kGradcheckCoords = 24;

struct GradcheckArgs {
  std::string arch;
  double epsilon = 1e-5;
  std::uint64_t seed = 0;
  std::size_t coords = kGradcheckCoords;
};

void cmd_gradcheck(const GradcheckArgs& a) {
  ddnet_gradcheck_result r{};
  check(ddnet_gradcheck(a.arch.c_str(), a.epsilon, a.seed, kGradcheckBatch, a.coords, &r));
  if (!(r.max_relative_error < kGradcheckThreshold)) {
    std::fprintf(stderr,
                 "error: gradient check failed: max_rel_err=%.3e >= %.0e at %s[%zu] "
                 "(analytic %.9g, numeric %.9g)\n",
                 r.max_relative_error, kGradcheckThreshold, r.tensor, r.index, r.analytic,
                 r.numeric);
    throw Failure{DDNET_ERR_NUMERIC};
  }
  std::printf("max_rel_err=%.6e worst=%s[%zu] analytic=%.9g numeric=%.9g coordinates=%zu\n",
              r.max_relative_error, r.tensor, r.index, r.analytic, r.numeric, r.coordinates);
}

struct SplitArgs {
  std::string manifest, out;
  std::uint64_t seed = 0;
  bool stratified = false;
};

void cmd_split(const SplitArgs& a) {
  auto manifest = load_manifest(a.manifest);
  check(ddnet_manifest_split(manifest.get(), a.seed, a.stratified ? 1 : 0));
  check(ddnet_manifest_save(manifest.get(), a.out.c_str()));
  const struct {
    const char* name;
    ddnet_split split;
  } rows[] = {{"train", DDNET_SPLIT_TRAIN},
              {"validation", DDNET_SPLIT_VALIDATION},
              {"test", DDNET_SPLIT_TEST}};
  for (const auto& row : rows) {
    const auto* m = manifest.get();
    std::printf("%s total=%zu Alert=%zu Drowsy=%zu\n", row.name, ddnet_manifest_count(m, row.split, 0),
                ddnet_manifest_count(m, row.split, DDNET_LABEL_ALERT),
                ddnet_manifest_count(m, row.split, DDNET_LABEL_DROWSY));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drowsiness classification CNNs: train, evaluate, ensemble and verify."};
  app.require_subcommand(1);
  app.set_version_flag("--version", ddnet_version());

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write a checkpoint");
  train_cmd->add_option("--arch", train.arch, "cnn1, cnn2 or cnn3");
  train_cmd->add_option("--preset", train.preset,
                        "section3-cnn1|2|3, methodology-cnn1|2 (default: section3 for --arch)");
  train_cmd->add_option("--manifest", train.manifest, "Dataset manifest CSV")->required();
  train_cmd->add_option("--config", train.config, "JSON config overriding the preset");
  train_cmd->add_option("--seed", train.seed, "Seed for init, shuffling and dropout");
  train_cmd->add_option("--out", train.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", train.history, "History CSV (default: <out>.history.csv)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--manifest", eval.manifest)->required();
  eval_cmd->add_option("--split", eval.split, "train, validation, test or all")->capture_default_str();
  eval_cmd->add_option("--format", eval.format, "text, json or csv")->capture_default_str();

  EnsembleArgs ens;
  auto* ens_cmd = app.add_subcommand("ensemble-eval", "Score an averaged ensemble of checkpoints");
  ens_cmd->add_option("--config", ens.config, "JSON with an `ensemble` member list")->required();
  ens_cmd->add_option("--manifest", ens.manifest)->required();
  ens_cmd->add_option("--split", ens.split)->capture_default_str();
  ens_cmd->add_option("--threshold", ens.threshold, "Drowsy iff averaged p_drowsy exceeds this");
  ens_cmd->add_option("--format", ens.format)->capture_default_str();

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Classify one PGM image");
  predict_cmd->add_option("--checkpoint", predict.checkpoint)->required();
  predict_cmd->add_option("--image", predict.image)->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of an architecture");
  grad_cmd->add_option("--arch", grad.arch)->required();
  grad_cmd->add_option("--epsilon", grad.epsilon)->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed)->capture_default_str();
  grad_cmd->add_option("--coords", grad.coords, "Coordinates sampled per tensor (0 = all)")
      ->capture_default_str();

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Assign 70/15/15 train/validation/test splits");
  split_cmd->add_option("--manifest", split.manifest)->required();
  split_cmd->add_option("--seed", split.seed)->capture_default_str();
  split_cmd->add_flag("--stratified", split.stratified, "Split each class separately");
  split_cmd->add_option("--out", split.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : DDNET_ERR_USAGE;
  }

  try {
    if (*train_cmd) cmd_train(train);
    else if (*eval_cmd) cmd_eval(eval);
    else if (*ens_cmd) cmd_ensemble_eval(ens);
    else if (*predict_cmd) cmd_predict(predict);
    else if (*grad_cmd) cmd_gradcheck(grad);
    else if (*split_cmd) cmd_split(split);
  } catch (const Failure& f) {
    return f.status;
  }
  return 0;
}
