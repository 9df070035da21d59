#pragma once

#include <cstdint>

#include "models/model.hpp"
#include "nn/network.hpp"

namespace ddnet::models {

// Gradient check of a freshly initialized architecture: a seeded batch of
// uniform [0, 1) images with seeded labels, mean cross-entropy loss, train
// mode.
nn::GradCheckResult gradcheck_architecture(ArchId arch, std::size_t batch,
                                           const nn::GradCheckOptions& options);

}  // namespace ddnet::models
