#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "core/error.hpp"
#include "models/checkpoint.hpp"
#include "models/model.hpp"
#include "models/training.hpp"
#include "support.hpp"

using namespace ddnet;
using namespace ddnet::models;
using data::Split;
using nn::Tensor;
using ddnet::test::TempDir;

namespace {

const ArchId kArchs[] = {ArchId::cnn1, ArchId::cnn2, ArchId::cnn3};

Errc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a checkpoint error");
  return Errc::io;
}

// flatten -> dense(2); logit_drowsy = mean pixel - 0.5, logit_alert = 0.
Model brightness_model() {
  Model m;
  m.spec.arch = ArchId::cnn1;
  m.spec.layers = {nn::LayerSpec{.kind = nn::LayerKind::flatten, .name = "flat"},
                   nn::LayerSpec{.kind = nn::LayerKind::dense, .name = "fc", .units = 2}};
  Rng rng(0);
  m.params = nn::init_params(m.spec.layers, m.spec.input_shape, rng);
  auto& w = m.params[0].value;
  for (std::size_t f = 0; f < w.dim(0); ++f) {
    w.at(f, 0) = 0.0;
    w.at(f, 1) = 1.0 / 8100.0;
  }
  m.params[1].value[0] = 0.0;
  m.params[1].value[1] = -0.5;
  return m;
}

// Constant images of the given brightness with their label codes.
std::filesystem::path constant_dataset(const std::filesystem::path& dir,
                                       const std::vector<std::pair<double, int>>& rows,
                                       const char* split = "test") {
  std::string text = "path,label,split\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string name = "c" + std::to_string(i) + ".pgm";
    data::save_pgm(data::Image{20, 30, std::vector<double>(600, rows[i].first)}, dir / name);
    text += name + "," + std::to_string(rows[i].second) + "," + split + "\n";
  }
  ddnet::test::write_text(dir / "m.csv", text);
  return dir / "m.csv";
}

std::vector<std::size_t> all_indices(const data::DatasetManifest& m) {
  std::vector<std::size_t> v(m.samples.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

TrainConfig quick_config(ArchId arch, std::size_t iterations) {
  auto c = default_config(arch);
  c.epochs = 0;
  c.max_iterations = iterations;
  c.batch_size = 8;
  c.eval_every = 10;
  return c;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("flatten sizes and spatial chains") {
  CHECK(flatten_size(model_spec(ArchId::cnn1)) == 6400);
  CHECK(flatten_size(model_spec(ArchId::cnn2)) == 1024);
  CHECK(flatten_size(model_spec(ArchId::cnn3)) == 32);

  // floor((n - 3) / 2) + 1 per pool, same-size convolutions in between.
  auto chain = [](std::size_t n, int pools) {
    std::vector<std::size_t> out{n};
    for (int i = 0; i < pools; ++i) out.push_back((out.back() - 3) / 2 + 1);
    return out;
  };
  CHECK(chain(90, 3) == std::vector<std::size_t>{90, 44, 21, 10});
  CHECK(chain(90, 5) == std::vector<std::size_t>{90, 44, 21, 10, 4, 1});
  for (ArchId arch : kArchs) {
    const auto spec = model_spec(arch);
    const auto shapes = nn::infer_shapes(spec.layers, spec.input_shape);
    std::vector<std::size_t> pooled{90};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (spec.layers[i].kind == nn::LayerKind::maxpool2d) pooled.push_back(shapes[i][1]);
      if (spec.layers[i].kind == nn::LayerKind::conv2d) {
        CHECK(shapes[i][1] == pooled.back());
        CHECK(shapes[i][2] == pooled.back());
      }
    }
    const int pools = static_cast<int>(pooled.size()) - 1;
    CHECK(pooled == chain(90, pools));
  }
}

TEST_CASE("architectures match the layer tables") {
  auto conv = [](const ModelSpec& s) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& l : s.layers)
      if (l.kind == nn::LayerKind::conv2d) out.emplace_back(l.kernel, l.out_channels);
    return out;
  };
  auto dense = [](const ModelSpec& s) {
    std::vector<std::size_t> out;
    for (const auto& l : s.layers)
      if (l.kind == nn::LayerKind::dense) out.push_back(l.units);
    return out;
  };
  auto dropout = [](const ModelSpec& s) {
    std::vector<double> out;
    for (const auto& l : s.layers)
      if (l.kind == nn::LayerKind::dropout) out.push_back(l.rate);
    return out;
  };
  using P = std::vector<std::pair<std::size_t, std::size_t>>;
  const auto s1 = model_spec(ArchId::cnn1), s2 = model_spec(ArchId::cnn2), s3 = model_spec(ArchId::cnn3);
  CHECK(conv(s1) == P{{3, 16}, {3, 32}, {3, 64}});
  CHECK(conv(s2) == P{{3, 3}, {4, 16}, {3, 32}, {3, 64}});
  CHECK(conv(s3) == P{{3, 8}, {3, 16}, {6, 16}, {3, 32}, {12, 32}});
  CHECK(dense(s1) == std::vector<std::size_t>{192, 96, 2});
  CHECK(dense(s2) == std::vector<std::size_t>{348, 192, 96, 2});
  CHECK(dense(s3) == std::vector<std::size_t>{796, 348, 192, 96, 2});
  CHECK(dropout(s1) == std::vector<double>{0.5, 0.5});
  CHECK(dropout(s2).empty());
  CHECK(dropout(s3) == std::vector<double>{0.6, 0.6});
  for (const auto* s : {&s1, &s2, &s3}) {
    const auto bn = std::count_if(s->layers.begin(), s->layers.end(),
                                  [](const auto& l) { return l.kind == nn::LayerKind::batchnorm; });
    CHECK(bn == 1);
    CHECK(s->layers.back().kind == nn::LayerKind::dense);
  }
  CHECK_THROWS_AS(arch_from_name("cnn4"), Error);
  CHECK(arch_from_name("cnn2") == ArchId::cnn2);
}

TEST_CASE("forward on two samples gives 2x2 logits for every net") {
  Rng rng(0);
  const auto x = ddnet::test::random_tensor({2, 1, 90, 90}, rng, 0, 1);
  for (ArchId arch : kArchs) {
    auto m = build_model(arch, 0);
    CHECK(predict_logits(m, x).shape() == nn::Shape{2, 2});
    Rng drop(1);
    CHECK(model_forward(m, x, nn::Mode::train, drop).output.shape() == nn::Shape{2, 2});
    CHECK_THROWS_AS(predict_logits(m, Tensor({2, 3, 90, 90})), Error);
  }
}

TEST_CASE("initialization is seeded") {
  for (ArchId arch : kArchs) {
    const auto a = build_model(arch, 17), b = build_model(arch, 17), c = build_model(arch, 18);
    REQUIRE(a.params.size() == b.params.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      CHECK(a.params[i].value == b.params[i].value);
      any_diff |= !(a.params[i].value == c.params[i].value);
    }
    CHECK(any_diff);
  }
}

TEST_CASE("initial parameter values") {
  const auto m = build_model(ArchId::cnn2, 3);
  for (const auto& p : m.params) {
    const auto& d = p.value.data();
    const auto name = p.name;
    if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".running_mean")) {
      CHECK(std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; }));
    } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      CHECK(std::all_of(d.begin(), d.end(), [](double v) { return v == 1.0; }));
    } else if (p.value.size() >= 1000) {
      // He normal: sample std close to sqrt(2 / fan_in).
      const std::size_t fan_in = p.value.rank() == 4 ? p.value.dim(1) * p.value.dim(2) * p.value.dim(3)
                                                     : p.value.dim(0);
      double sq = 0.0;
      for (double v : d) sq += v * v;
      const double sd = std::sqrt(sq / static_cast<double>(d.size()));
      CAPTURE(name);
      CHECK(sd == doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.1));
    }
  }
}

TEST_CASE("zero weights give even probabilities") {
  for (ArchId arch : kArchs) {
    auto m = build_model(arch, 0);
    for (auto& p : m.params) {
      if (p.name.ends_with(".weight")) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
    }
    const auto probs = predict_probs(m, Tensor({3, 1, 90, 90}, 0.0));
    for (double v : probs.data()) CHECK(v == 0.5);
  }
}

TEST_CASE("inference is repeatable and leaves the model alone") {
  Rng rng(5);
  const auto x = ddnet::test::random_tensor({4, 1, 90, 90}, rng, 0, 1);
  const auto m = build_model(ArchId::cnn3, 2);
  const auto before = m.params;
  CHECK(predict_logits(m, x) == predict_logits(m, x));
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(m.params[i].value == before[i].value);
}

TEST_CASE("train mode updates batchnorm running statistics") {
  Rng rng(6);
  const auto x = ddnet::test::random_tensor({4, 1, 90, 90}, rng, 0, 1);
  auto m = build_model(ArchId::cnn2, 1);
  const auto idx = std::find_if(m.params.begin(), m.params.end(),
                                [](const auto& p) { return p.name.ends_with(".running_mean"); });
  REQUIRE(idx != m.params.end());
  const auto before = idx->value;
  Rng drop(0);
  model_forward(m, x, nn::Mode::train, drop);
  CHECK_FALSE(idx->value == before);
}

TEST_CASE("argmax ties go to the lower index") {
  Tensor t({3, 2});
  t.at(0, 0) = 1; t.at(0, 1) = 1;
  t.at(1, 0) = 0; t.at(1, 1) = 2;
  t.at(2, 0) = 3; t.at(2, 1) = -1;
  CHECK(argmax_rows(t) == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("dropout overrides") {
  auto spec = model_spec(ArchId::cnn1);
  std::string name;
  for (const auto& l : spec.layers)
    if (l.kind == nn::LayerKind::dropout) name = l.name;
  set_dropout_rate(spec, name, 0.25);
  CHECK(std::any_of(spec.layers.begin(), spec.layers.end(), [](const auto& l) { return l.rate == 0.25; }));
  CHECK_THROWS_AS(set_dropout_rate(spec, name, 1.0), Error);
  CHECK_THROWS_AS(set_dropout_rate(spec, "nothing", 0.1), Error);
}

TEST_CASE("evaluate on hand-built fixtures") {
  TempDir dir;
  const auto model = brightness_model();

  SUBCASE("known logits give a hand-tallied matrix") {
    // (brightness, label): A->A, D->D, A->D, D->D, D->A
    const auto m = data::load_manifest(
        constant_dataset(dir.path(), {{0.2, 1}, {0.8, 2}, {0.7, 1}, {0.9, 2}, {0.1, 2}}));
    data::ImageStore store(m);
    const auto cm = evaluate(model, m, all_indices(m), store);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(1, 1) == 2);
    CHECK(cm.class_names() == std::vector<std::string>{"Alert", "Drowsy"});
  }

  SUBCASE("all-alert model on an all-alert split") {
    auto alert = model;
    alert.params[1].value[1] = -10.0;
    const auto m = data::load_manifest(constant_dataset(dir.path(), {{0.9, 1}, {0.1, 1}, {0.5, 1}}));
    data::ImageStore store(m);
    CHECK(metrics::accuracy(evaluate(alert, m, all_indices(m), store)) == 1.0);
  }

  SUBCASE("no samples") {
    const auto m = data::load_manifest(constant_dataset(dir.path(), {{0.9, 1}}));
    data::ImageStore store(m);
    CHECK_THROWS_AS(evaluate(model, m, {}, store), Error);
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  Rng rng(8);
  const auto x = ddnet::test::random_tensor({32, 1, 90, 90}, rng, 0, 1);
  for (ArchId arch : kArchs) {
    auto m = build_model(arch, 4);
    // Non-trivial running statistics.
    Rng drop(0);
    model_forward(m, x, nn::Mode::train, drop);
    const auto first = dir / "first.ddnc", second = dir / "second.ddnc";
    save_checkpoint(m, first);
    const auto loaded = load_checkpoint(first);
    save_checkpoint(loaded, second);
    CHECK(ddnet::test::read_text(first) == ddnet::test::read_text(second));
    CHECK(loaded.spec == m.spec);
    REQUIRE(loaded.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      CHECK(loaded.params[i].name == m.params[i].name);
      CHECK(loaded.params[i].trainable == m.params[i].trainable);
      double worst_rel = 0.0;
      for (std::size_t j = 0; j < m.params[i].value.size(); ++j) {
        const double a = m.params[i].value[j], b = loaded.params[i].value[j];
        if (a != 0.0) worst_rel = std::max(worst_rel, std::abs(a - b) / std::abs(a));
        else CHECK(b == 0.0);
      }
      CHECK(worst_rel <= 1e-6);
    }
    const auto before = predict_logits(m, x), after = predict_logits(loaded, x);
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(before[i] - after[i]));
    CAPTURE(arch_name(arch));
    CHECK(worst < 1e-5);
    CHECK(argmax_rows(before) == argmax_rows(after));
  }
}

TEST_CASE("checkpoint errors are distinct") {
  const auto bytes = encode_checkpoint(build_model(ArchId::cnn3, 0));
  auto truncated = bytes;
  truncated.pop_back();
  CHECK(decode_error(truncated) == Errc::truncated_payload);
  CHECK(decode_error({bytes.begin(), bytes.begin() + 20}) == Errc::truncated_payload);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(decode_error(magic) == Errc::bad_magic);

  auto version = bytes;
  version[4] = 2;
  CHECK(decode_error(version) == Errc::version_mismatch);

  std::string text(bytes.begin(), bytes.end());
  const auto pos = text.find("\"units\":96");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 10, "\"units\":97");
  CHECK(decode_error({text.begin(), text.end()}) == Errc::header_mismatch);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == Errc::header_mismatch);

  TempDir dir;
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ddnc"), Error);
}

TEST_CASE("presets and config files") {
  const auto c1 = preset("section3-cnn1");
  CHECK(c1.arch == ArchId::cnn1);
  CHECK(c1.optimizer == optim::OptimizerKind::sgd_momentum);
  CHECK(c1.hyper.learning_rate == 0.001);
  CHECK(c1.batch_size == 32);
  CHECK(c1.epochs == 4);
  CHECK(c1.max_iterations == 2416);
  CHECK(preset("section3-cnn3").max_iterations == 2816);
  CHECK(preset("methodology-cnn1").max_iterations == 1200);
  CHECK(preset("methodology-cnn2").max_iterations == 1250);
  CHECK(default_config(ArchId::cnn2).optimizer == optim::OptimizerKind::adam);
  CHECK(preset_names().size() == 5);
  CHECK_THROWS_AS(preset("section4-cnn1"), Error);

  const auto j = nlohmann::json::parse(R"({"preset": "section3-cnn2", "learning_rate": 0.01,
      "batch_size": 16, "seed": 9, "dropout_overrides": {"x": 0.1}, "ensemble": {"members": []}})");
  const auto c = config_from_json(j, default_config(ArchId::cnn1));
  CHECK(c.arch == ArchId::cnn2);
  CHECK(c.hyper.learning_rate == 0.01);
  CHECK(c.batch_size == 16);
  CHECK(c.seed == 9);
  CHECK(c.dropout_overrides.at("x") == 0.1);
  CHECK(c.max_iterations == 2416);

  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"batch": 3})"), c1), Error);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"batch_size": -3})"), c1), Error);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"batch_size": "8"})"), c1), Error);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse("[1]"), c1), Error);

  auto bad = c1;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(validate_config(bad), Error);
  bad = c1;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_config(bad), Error);
}

TEST_CASE("planned iterations and history csv") {
  auto c = default_config(ArchId::cnn1);
  CHECK(planned_iterations(c, 22557) == 2416);
  CHECK(planned_iterations(c, 100) == 16);
  c.epochs = 0;
  CHECK(planned_iterations(c, 100) == 2416);
  const TrainHistory h{{1, 0.5, 0.25, 0.75}, {2, 0.125, 1.0, 1.0}};
  CHECK(format_history_csv(h) == "iteration,train_loss,train_acc,val_acc\n1,0.5,0.25,0.75\n2,0.125,1,1\n");
}

TEST_CASE("training on the synthetic dataset") {
  TempDir dir;
  const auto m = data::load_manifest(ddnet::test::write_center_dataset(dir.path(), 60, 3, true));
  data::ImageStore store(m);

  SUBCASE("one iteration gives one history entry") {
    auto model = build_model(ArchId::cnn2, 0);
    auto c = quick_config(ArchId::cnn2, 1);
    const auto before = model.params;
    const auto h = train(model, m, c, store);
    REQUIRE(h.size() == 1);
    CHECK(h[0].iteration == 1);
    CHECK_FALSE(model.params[0].value == before[0].value);
    c.max_iterations = 0;
    CHECK_THROWS_AS(train(model, m, c, store), Error);
  }

  SUBCASE("history is recorded every eval_every steps and at the end") {
    auto model = build_model(ArchId::cnn3, 0);
    auto c = quick_config(ArchId::cnn3, 25);
    std::vector<std::size_t> seen;
    const auto h = train(model, m, c, store, [&](const HistoryEntry& e) { seen.push_back(e.iteration); });
    CHECK(seen == std::vector<std::size_t>{10, 20, 25});
    REQUIRE(h.size() == 3);
    for (const auto& e : h) {
      CHECK(e.train_accuracy >= 0.0);
      CHECK(e.train_accuracy <= 1.0);
      CHECK(e.validation_accuracy >= 0.0);
      CHECK(e.validation_accuracy <= 1.0);
      CHECK(std::isfinite(e.train_loss));
    }
  }

  SUBCASE("epochs bound the run") {
    auto model = build_model(ArchId::cnn3, 0);
    auto c = quick_config(ArchId::cnn3, 1000);
    c.epochs = 2;
    const auto h = train(model, m, c, store);
    // 42 training samples in batches of 8.
    CHECK(h.back().iteration == 12);
  }

  SUBCASE("same seed gives identical history and parameters") {
    auto a = build_model(ArchId::cnn1, 5), b = build_model(ArchId::cnn1, 5);
    const auto c = quick_config(ArchId::cnn1, 12);
    const auto ha = train(a, m, c, store), hb = train(b, m, c, store);
    CHECK(ha == hb);
    CHECK(format_history_csv(ha) == format_history_csv(hb));
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].value == b.params[i].value);
  }

  SUBCASE("empty splits are rejected") {
    auto plain = m;
    for (auto& s : plain.samples) s.split = Split::train;
    auto model = build_model(ArchId::cnn3, 0);
    CHECK_THROWS_AS(train(model, plain, quick_config(ArchId::cnn3, 1), store), Error);
  }

  SUBCASE("a diverging run names the iteration") {
    auto model = build_model(ArchId::cnn2, 0);
    auto c = quick_config(ArchId::cnn2, 5);
    c.optimizer = optim::OptimizerKind::sgd_momentum;
    c.hyper.learning_rate = 1e300;
    try {
      train(model, m, c, store);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::numeric);
      CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
  }
}

// Net decrease of the window-10 mean: the entry at iteration 100 covers steps
// 91..100 and the first entry covers steps 1..10.
TEST_CASE("smoothed training loss falls over the first 100 iterations") {
  TempDir dir;
  const auto m = data::load_manifest(ddnet::test::write_center_dataset(dir.path(), 80, 4, true));
  data::ImageStore store(m);
  for (ArchId arch : kArchs) {
    auto model = build_model(arch, 0);
    const auto h = train(model, m, quick_config(arch, 100), store);
    REQUIRE(h.size() == 10);
    CAPTURE(arch_name(arch));
    CHECK(h.back().train_loss < h.front().train_loss);
  }
}

TEST_CASE("memorizes a ten-sample set") {
  TempDir dir;
  const auto m = data::load_manifest(ddnet::test::write_center_dataset(dir.path(), 20, 6, true));
  data::ImageStore store(m);
  auto model = build_model(ArchId::cnn2, 1);
  auto c = quick_config(ArchId::cnn2, 40);
  train(model, m, c, store);
  auto train_idx = m.indices(Split::train);
  train_idx.resize(10);
  const auto cm = evaluate(model, m, train_idx, store);
  CHECK(cm.at(0, 1) == 0);
  CHECK(cm.at(1, 0) == 0);
}

}  // TEST_SUITE
