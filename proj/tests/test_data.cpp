#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "core/error.hpp"
#include "data/image.hpp"
#include "data/manifest.hpp"
#include "support.hpp"

using namespace ddnet;
using namespace ddnet::data;
using ddnet::test::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Errc pgm_error(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_pgm(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a parse error");
  return Errc::io;
}

std::string big_manifest(std::size_t alert, std::size_t drowsy) {
  std::string text = "path,label\n";
  for (std::size_t i = 0; i < alert; ++i) text += "a" + std::to_string(i) + ".pgm,1\n";
  for (std::size_t i = 0; i < drowsy; ++i) text += "d" + std::to_string(i) + ".pgm,2\n";
  return text;
}

DatasetManifest unchecked(const std::string& text) {
  ManifestOptions o;
  o.check_files = false;
  return parse_manifest(text, ".", o);
}

std::size_t count_split(const DatasetManifest& m, Split s) { return m.indices(s).size(); }

// Bilinear sample of the source at continuous coordinates (cy, cx) in pixel
// centre units, written independently of the library's index bookkeeping.
double reference_bilinear(const Image& img, std::size_t out_h, std::size_t out_w, std::size_t y,
                          std::size_t x) {
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    const double c = (i + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::min(std::max(c, 0.0), static_cast<double>(in - 1));
  };
  const double cy = coord(y, img.height, out_h), cx = coord(x, img.width, out_w);
  double acc = 0.0;
  for (std::size_t sy = 0; sy < img.height; ++sy) {
    for (std::size_t sx = 0; sx < img.width; ++sx) {
      const double wy = std::max(0.0, 1.0 - std::abs(cy - sy));
      const double wx = std::max(0.0, 1.0 - std::abs(cx - sx));
      acc += wy * wx * img.at(sy, sx);
    }
  }
  return acc;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parse a small 8-bit pgm") {
  const auto img = parse_pgm(bytes_of("P5 2 2 255\n", {0, 255, 128, 64}));
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.pixels[0] == 0.0);
  CHECK(img.pixels[1] == 1.0);
  CHECK(img.pixels[2] == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(img.pixels[3] == doctest::Approx(0.25098).epsilon(1e-5));
}

TEST_CASE("parse maxval 1, comments and 16-bit samples") {
  CHECK(parse_pgm(bytes_of("P5 1 1 1\n", {1})).pixels == std::vector<double>{1.0});
  const auto c = parse_pgm(bytes_of("P5\n# made by hand\n1 # w\n1\n255\n", {51}));
  CHECK(c.pixels[0] == doctest::Approx(0.2));
  const auto w = parse_pgm(bytes_of("P5 2 1 65535\n", {0xFF, 0xFF, 0x80, 0x00}));
  CHECK(w.pixels[0] == 1.0);
  CHECK(w.pixels[1] == doctest::Approx(32768.0 / 65535.0));
}

TEST_CASE("pgm errors are distinct") {
  CHECK(pgm_error(bytes_of("P2 1 1 255\n", {0})) == Errc::bad_magic);
  CHECK(pgm_error(bytes_of("P5 99999999999 1 255\n", {0})) == Errc::parse);
  CHECK(pgm_error(bytes_of("P5 1 1 70000\n", {0})) == Errc::parse);
  CHECK(pgm_error(bytes_of("P5 2 2 255\n", {0, 1, 2})) == Errc::truncated_payload);
  CHECK(pgm_error(bytes_of("P5 2 2", {})) == Errc::truncated_payload);
  CHECK(pgm_error(bytes_of("P5 0 2 255\n", {})) == Errc::parse);
}

TEST_CASE("pgm write then parse round trip") {
  Rng rng(9);
  Image img{90, 90, std::vector<double>(90 * 90)};
  for (double& p : img.pixels) p = rng.uniform();
  for (unsigned maxval : {255u, 65535u}) {
    const auto back = parse_pgm(encode_pgm(img, maxval));
    REQUIRE(back.pixels.size() == img.pixels.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      worst = std::max(worst, std::abs(back.pixels[i] - img.pixels[i]));
    }
    CHECK(worst <= 0.5 / maxval + 1e-12);
    CHECK(worst <= 1.0 / 255.0);
  }
}

TEST_CASE("load_pgm names the file on failure") {
  TempDir dir;
  ddnet::test::write_text(dir / "bad.pgm", "P6 1 1 255\n\x01");
  try {
    load_pgm(dir / "bad.pgm");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad.pgm") != std::string::npos);
  }
  CHECK_THROWS_AS(load_pgm(dir / "missing.pgm"), Error);
}

TEST_CASE("resize identity and constant") {
  Rng rng(1);
  Image img{90, 90, std::vector<double>(90 * 90)};
  for (double& p : img.pixels) p = rng.uniform();
  CHECK(resize_bilinear(img).pixels == img.pixels);

  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {7, 300}, {480, 640}}) {
    Image c{h, w, std::vector<double>(h * w, 0.37)};
    const auto out = resize_bilinear(c);
    CHECK(out.height == 90);
    CHECK(out.width == 90);
    for (double p : out.pixels) CHECK(p == doctest::Approx(0.37).epsilon(1e-12));
  }
}

TEST_CASE("resize checkerboard 4x4 to 2x2") {
  Image board{4, 4, std::vector<double>(16)};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) board.pixels[y * 4 + x] = (x + y) % 2 == 0 ? 1.0 : 0.0;
  // Output centres land midway between source pixels: weights 1/4 each over
  // a 2x2 block holding two ones and two zeros.
  const auto out = resize_bilinear(board, 2, 2);
  for (double p : out.pixels) CHECK(p == doctest::Approx(0.5).epsilon(1e-15));

  Image ramp{4, 4, std::vector<double>(16)};
  for (std::size_t i = 0; i < 16; ++i) ramp.pixels[i] = i / 15.0;
  const auto r = resize_bilinear(ramp, 2, 2);
  // Block means of the ramp: rows {0,1} cols {0,1} -> (0+1+4+5)/4/15.
  CHECK(r.pixels[0] == doctest::Approx(2.5 / 15.0));
  CHECK(r.pixels[1] == doctest::Approx(4.5 / 15.0));
  CHECK(r.pixels[2] == doctest::Approx(10.5 / 15.0));
  CHECK(r.pixels[3] == doctest::Approx(12.5 / 15.0));
}

TEST_CASE("resize matches a tent-filter oracle and stays in range") {
  Rng rng(2);
  for (auto [h, w, oh, ow] : {std::array<std::size_t, 4>{5, 7, 9, 4}, {13, 3, 6, 11}, {2, 2, 90, 90}}) {
    Image img{h, w, std::vector<double>(h * w)};
    for (double& p : img.pixels) p = rng.uniform();
    const auto out = resize_bilinear(img, oh, ow);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double got = out.pixels[y * ow + x];
        CHECK(std::abs(got - reference_bilinear(img, oh, ow, y, x)) < 1e-12);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
      }
    }
  }
  CHECK_THROWS_AS(resize_bilinear(Image{}), Error);
}

TEST_CASE("manifest totals") {
  const auto m = unchecked(big_manifest(25492, 6733));
  CHECK(m.samples.size() == 32225);
  CHECK(m.class_counts[0] == 25492);
  CHECK(m.class_counts[1] == 6733);
  CHECK(m.class_counts[0] + m.class_counts[1] == m.samples.size());
  CHECK_FALSE(m.has_splits());
}

TEST_CASE("manifest errors") {
  CHECK_THROWS_AS(unchecked("path,label\n"), Error);
  CHECK_THROWS_AS(unchecked(""), Error);
  CHECK_THROWS_AS(unchecked("file,class\na.pgm,1\n"), Error);
  try {
    unchecked("path,label\na.pgm,1\nb.pgm,3\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_label);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  try {
    unchecked("path,label\na.pgm,1\na.pgm,2\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::duplicate_path);
  }
  try {
    parse_manifest("path,label\nnowhere.pgm,1\n", "/nonexistent-dir");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_file);
  }
}

TEST_CASE("lenient manifest skips bad rows with warnings") {
  ManifestOptions o;
  o.strict = false;
  o.check_files = false;
  const auto m = parse_manifest("path,label\na.pgm,1\nb.pgm,3\na.pgm,2\nc.pgm,2\n", ".", o);
  CHECK(m.samples.size() == 2);
  CHECK(m.warnings.size() == 2);
  CHECK(m.class_counts[0] == 1);
  CHECK(m.class_counts[1] == 1);
}

TEST_CASE("label table is one bijection") {
  for (long code : {1L, 2L}) {
    const auto label = *label_from_code(code);
    CHECK(label_from_index(class_index(label)) == label);
    CHECK(static_cast<long>(label) == code);
  }
  CHECK(class_index(Label::alert) == 0);
  CHECK(class_index(Label::drowsy) == 1);
  CHECK(std::string(label_name(Label::alert)) == "Alert");
  CHECK_FALSE(label_from_code(0));
  CHECK_FALSE(label_from_code(3));
}

TEST_CASE("split sizes follow floor and remainder") {
  const auto big = split_dataset(unchecked(big_manifest(25492, 6733)), {}, 0, false);
  CHECK(count_split(big, Split::train) == 22557);
  CHECK(count_split(big, Split::validation) == 4833);
  CHECK(count_split(big, Split::test) == 4835);

  const auto small = split_dataset(unchecked(big_manifest(5, 5)), {}, 1, false);
  CHECK(count_split(small, Split::train) == 7);
  CHECK(count_split(small, Split::validation) == 1);
  CHECK(count_split(small, Split::test) == 2);

  CHECK_THROWS_AS(split_dataset(unchecked(big_manifest(1, 1)), {}, 0), Error);
  CHECK_THROWS_AS(split_dataset(unchecked(big_manifest(5, 5)), {0.7, 0.2, 0.2}, 0), Error);
  CHECK_THROWS_AS(split_dataset(unchecked(big_manifest(5, 5)), {0.85, 0.15, 0.0}, 0), Error);
}

TEST_CASE("splits partition the samples for many sizes") {
  for (std::size_t alert : {2u, 3u, 10u, 37u, 101u}) {
    for (std::size_t drowsy : {1u, 4u, 29u}) {
      const auto base = unchecked(big_manifest(alert, drowsy));
      for (bool stratified : {false, true}) {
        const auto m = split_dataset(base, {}, alert * 31 + drowsy, stratified);
        CHECK(m.has_splits());
        const std::size_t n = m.samples.size();
        CHECK(count_split(m, Split::train) + count_split(m, Split::validation) +
                  count_split(m, Split::test) == n);
        if (!stratified) {
          CHECK(count_split(m, Split::train) == static_cast<std::size_t>(std::floor(0.7 * n + 1e-9)));
        }
        for (std::size_t i = 0; i < n; ++i) CHECK(m.samples[i].path == base.samples[i].path);
      }
    }
  }
}

TEST_CASE("stratified split keeps the class ratio inside every split") {
  const auto m = split_dataset(unchecked(big_manifest(25492, 6733)), {}, 7, true);
  const double alert_share = 25492.0 / 32225.0;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const double size = static_cast<double>(count_split(m, s));
    CAPTURE(split_name(s));
    CHECK(std::abs(m.count(s, Label::alert) - size * alert_share) <= 1.0);
    CHECK(std::abs(m.count(s, Label::drowsy) - size * (1.0 - alert_share)) <= 1.0);
  }
}

// Floor for train and validation leaves each fractional part to test, so a
// class can land up to two samples above its test share.
TEST_CASE("stratified split applies floor and remainder within each class") {
  for (std::size_t alert : {3u, 25492u, 1001u}) {
    for (std::size_t drowsy : {3u, 6733u, 17u}) {
      const auto m = split_dataset(unchecked(big_manifest(alert, drowsy)), {}, 7, true);
      for (auto [label, n] : {std::pair{Label::alert, alert}, {Label::drowsy, drowsy}}) {
        const auto train = static_cast<std::size_t>(std::floor(0.70 * n + 1e-9));
        const auto val = static_cast<std::size_t>(std::floor(0.15 * n + 1e-9));
        CHECK(m.count(Split::train, label) == train);
        CHECK(m.count(Split::validation, label) == val);
        CHECK(m.count(Split::test, label) == n - train - val);
        CHECK(std::abs(m.count(Split::train, label) - 0.70 * n) < 1.0);
        CHECK(std::abs(m.count(Split::validation, label) - 0.15 * n) < 1.0);
        CHECK(std::abs(m.count(Split::test, label) - 0.15 * n) < 2.0);
      }
    }
  }
}

TEST_CASE("split determinism") {
  const auto base = unchecked(big_manifest(40, 17));
  for (bool stratified : {false, true}) {
    const auto a = split_dataset(base, {}, 5, stratified);
    const auto b = split_dataset(base, {}, 5, stratified);
    const auto c = split_dataset(base, {}, 6, stratified);
    CHECK(format_manifest(a) == format_manifest(b));
    CHECK(format_manifest(a) != format_manifest(c));
    CHECK(a.seed == 5);
  }
}

TEST_CASE("manifest save and reload keeps splits") {
  TempDir dir;
  const auto m = split_dataset(unchecked(big_manifest(6, 4)), {}, 3);
  save_manifest(m, dir / "m.csv");
  ManifestOptions o;
  o.check_files = false;
  const auto back = load_manifest(dir / "m.csv", o);
  CHECK(format_manifest(back) == format_manifest(m));
  CHECK(back.base_dir == dir.path());
}

TEST_CASE("batches") {
  TempDir dir;
  Rng rng(0);
  std::string text = "path,label,split\n";
  for (int i = 0; i < 12; ++i) {
    const std::string name = "f" + std::to_string(i) + ".pgm";
    save_pgm(ddnet::test::center_image(i % 3 == 0, rng, 40), dir / name);
    text += name + (i % 3 == 0 ? ",2," : ",1,") + (i < 10 ? "train" : "test") + "\n";
  }
  ddnet::test::write_text(dir / "m.csv", text);
  const auto m = load_manifest(dir / "m.csv");
  ImageStore store(m);

  BatchSequence e0(m, Split::train, 4, 11, 0, store);
  REQUIRE(e0.size() == 3);
  CHECK(e0[0].labels.size() == 4);
  CHECK(e0[1].labels.size() == 4);
  CHECK(e0[2].labels.size() == 2);
  CHECK(e0[2].images.shape() == nn::Shape{2, 1, 90, 90});
  CHECK_THROWS_AS(e0[3], Error);

  BatchSequence e1(m, Split::train, 4, 11, 1, store);
  BatchSequence again(m, Split::train, 4, 11, 0, store);
  CHECK(e0.order() != e1.order());
  CHECK(e0.order() == again.order());

  std::multiset<std::size_t> seen;
  for (std::size_t b = 0; b < e0.size(); ++b) {
    const auto batch = e0[b];
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
      const auto idx = batch.samples[i];
      seen.insert(idx);
      CHECK(batch.labels[i] == class_index(m.samples[idx].label));
      const double* px = batch.images.raw() + i * 90 * 90;
      CHECK(std::all_of(px, px + 90 * 90, [](double v) { return v >= 0.0 && v <= 1.0; }));
    }
  }
  const auto train = m.indices(Split::train);
  CHECK(seen == std::multiset<std::size_t>(train.begin(), train.end()));

  CHECK_THROWS_AS(BatchSequence(m, Split::validation, 4, 0, 0, store), Error);
  CHECK_THROWS_AS(BatchSequence(m, Split::train, 0, 0, 0, store), Error);
}

TEST_CASE("unreadable image names the path") {
  TempDir dir;
  ddnet::test::write_text(dir / "broken.pgm", "P5 90 90 255\n");
  ddnet::test::write_text(dir / "m.csv", "path,label,split\nbroken.pgm,1,train\n");
  const auto m = load_manifest(dir / "m.csv");
  ImageStore store(m);
  BatchSequence seq(m, Split::train, 1, 0, 0, store);
  try {
    seq[0];
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("broken.pgm") != std::string::npos);
  }
}

TEST_CASE("network input replicates channels") {
  Image img{3, 5, std::vector<double>(15, 0.25)};
  const auto px = to_network_input(img, 3);
  CHECK(px.size() == 3 * 90 * 90);
  CHECK(std::all_of(px.begin(), px.end(), [](double v) { return v == doctest::Approx(0.25); }));
}

}  // TEST_SUITE
