#include "data/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "core/error.hpp"

namespace ddnet::data {
namespace {

constexpr std::size_t kMaxExtent = 1u << 15;

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what, std::size_t limit) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(Errc::truncated_payload, std::string("PGM header ends before ") + what);
    if (!std::isdigit(bytes_[pos_])) fail(Errc::parse, std::string("PGM header: expected ") + what);
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > limit) fail(Errc::parse, std::string("PGM header overflow in ") + what);
      ++pos_;
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image parse_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    fail(Errc::bad_magic, "not a binary PGM (expected 'P5')");
  }
  HeaderReader h(bytes.subspan(0));
  h.advance();
  h.advance();
  const std::size_t width = h.number("width", kMaxExtent);
  const std::size_t height = h.number("height", kMaxExtent);
  const std::size_t maxval = h.number("maxval", 65535);
  if (width == 0 || height == 0) fail(Errc::parse, "PGM has zero extent");
  if (maxval == 0) fail(Errc::parse, "PGM maxval must be >= 1");
  if (h.pos() >= bytes.size() || !std::isspace(bytes[h.pos()])) {
    fail(Errc::truncated_payload, "PGM header not terminated");
  }
  const std::size_t start = h.pos() + 1;
  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t need = width * height * sample_bytes;
  if (bytes.size() - start < need) {
    fail(Errc::truncated_payload, "PGM payload has " + std::to_string(bytes.size() - start) +
                                      " bytes, expected " + std::to_string(need));
  }
  Image img{height, width, std::vector<double>(width * height)};
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    std::size_t v = sample_bytes == 1
                        ? bytes[start + i]
                        : (std::size_t{bytes[start + 2 * i]} << 8) | bytes[start + 2 * i + 1];
    img.pixels[i] = std::min(1.0, static_cast<double>(v) * scale);
  }
  return img;
}

Image load_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_pgm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " in '" + path.string() + "'");
  }
}

std::vector<std::uint8_t> encode_pgm(const Image& image, unsigned maxval) {
  if (maxval == 0 || maxval > 65535) fail(Errc::invalid_argument, "PGM maxval must be 1..65535");
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double p : image.pixels) {
    const auto v = static_cast<unsigned>(std::lround(std::clamp(p, 0.0, 1.0) * maxval));
    if (maxval > 255) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

void save_pgm(const Image& image, const std::filesystem::path& path, unsigned maxval) {
  const auto bytes = encode_pgm(image, maxval);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (image.height == 0 || image.width == 0 || out_h == 0 || out_w == 0) {
    fail(Errc::dimension, "cannot resize a zero-sized image");
  }
  Image out{out_h, out_w, std::vector<double>(out_h * out_w)};
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  auto source = [](std::size_t i, double scale, std::size_t extent, std::size_t& lo,
                   std::size_t& hi, double& frac) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    lo = static_cast<std::size_t>(std::floor(s));
    hi = std::min(lo + 1, extent - 1);
    frac = s - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double wy;
    source(y, sy, image.height, y0, y1, wy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double wx;
      source(x, sx, image.width, x0, x1, wx);
      const double top = (1.0 - wx) * image.at(y0, x0) + wx * image.at(y0, x1);
      const double bottom = (1.0 - wx) * image.at(y1, x0) + wx * image.at(y1, x1);
      out.pixels[y * out_w + x] = std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace ddnet::data
