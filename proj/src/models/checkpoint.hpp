#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "models/model.hpp"

namespace ddnet::models {

// Layout: "DDNC", u8 version (1), u32 little-endian header length, JSON
// header {arch_id, input_shape, num_classes, layers, params}, then every
// parameter as little-endian f32 in header order.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ddnet::models
