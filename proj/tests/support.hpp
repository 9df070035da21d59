#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/image.hpp"
#include "nn/ops.hpp"
#include "nn/tensor.hpp"

namespace ddnet::test {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ddnet") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nn::Tensor random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Nested-loop cross-correlation with explicit zero padding.
inline nn::Tensor direct_conv(const nn::Tensor& x, const nn::Tensor& w, const nn::Tensor& b, std::size_t s,
                              nn::Padding pad) {
  const std::size_t k = w.dim(2);
  const std::size_t oh = (x.dim(2) + pad.before + pad.after - k) / s + 1;
  const std::size_t ow = (x.dim(3) + pad.before + pad.after - k) / s + 1;
  const auto at = [&](std::size_t n, std::size_t c, long y, long xx) {
    if (y < 0 || xx < 0 || y >= static_cast<long>(x.dim(2)) || xx >= static_cast<long>(x.dim(3))) return 0.0;
    return x.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
  };
  nn::Tensor out({x.dim(0), w.dim(0), oh, ow});
  for (std::size_t n = 0; n < x.dim(0); ++n)
    for (std::size_t o = 0; o < w.dim(0); ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < x.dim(1); ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j)
                acc += w.at(o, c, i, j) * at(n, c, static_cast<long>(y * s + i) - static_cast<long>(pad.before),
                                             static_cast<long>(xx * s + j) - static_cast<long>(pad.before));
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Bright-center (Drowsy) vs dark-center (Alert) square image with noise.
inline data::Image center_image(bool bright, Rng& rng, std::size_t size = data::kInputSize) {
  data::Image img{size, size, std::vector<double>(size * size)};
  const double lo = size * 0.3, hi = size * 0.7;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const bool center = y >= lo && y < hi && x >= lo && x < hi;
      const double base = center ? (bright ? 0.85 : 0.15) : 0.5;
      img.pixels[y * size + x] = std::clamp(base + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0);
    }
  }
  return img;
}

// Writes `n` synthetic PGMs plus a manifest, alternating labels. When
// `splits` is set the manifest carries a split column (70/15/15 by position
// within each class).
inline std::filesystem::path write_center_dataset(const std::filesystem::path& dir, std::size_t n,
                                                  std::uint64_t seed, bool splits = false) {
  Rng rng(seed);
  std::string manifest = splits ? "path,label,split\n" : "path,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    const bool drowsy = i % 2 == 1;
    const std::string name = "img" + std::to_string(i) + ".pgm";
    data::save_pgm(center_image(drowsy, rng), dir / name);
    manifest += name + "," + (drowsy ? "2" : "1");
    if (splits) {
      const std::size_t k = i / 2, per_class = n / 2;
      const char* split = k < per_class * 7 / 10 ? "train" : k < per_class * 85 / 100 ? "validation" : "test";
      manifest += std::string(",") + split;
    }
    manifest += "\n";
  }
  const auto path = dir / "manifest.csv";
  write_text(path, manifest);
  return path;
}

}  // namespace ddnet::test
