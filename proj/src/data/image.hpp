#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ddnet::data {

inline constexpr std::size_t kInputSize = 90;

// Single-channel image, row-major, pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

// Binary PGM (P5). Header comments are skipped; 16-bit samples are big-endian.
Image parse_pgm(std::span<const std::uint8_t> bytes);
Image load_pgm(const std::filesystem::path& path);

// Quantizes to [0, maxval] with rounding.
std::vector<std::uint8_t> encode_pgm(const Image& image, unsigned maxval = 255);
void save_pgm(const Image& image, const std::filesystem::path& path, unsigned maxval = 255);

// Bilinear interpolation with half-pixel centres, edge-clamped.
Image resize_bilinear(const Image& image, std::size_t out_h = kInputSize,
                      std::size_t out_w = kInputSize);

}  // namespace ddnet::data
