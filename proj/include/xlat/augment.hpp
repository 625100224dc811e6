#pragma once

#include "xlat/config.hpp"
#include "xlat/rng.hpp"
#include "xlat/tensor.hpp"

namespace xlat::data {

/// Training-time augmentation, applied per sample in this order: horizontal
/// flip (p = 0.5), rotation U(-max_deg, +max_deg), zoom by U(zoom_min,
/// zoom_max) with a random crop back to the original size. Always consumes
/// exactly five draws so the stream stays aligned across settings.
Tensor<float> augment(const Tensor<float>& image, SeededRng& rng,
                      const train::AugmentSettings& settings);

}  // namespace xlat::data
