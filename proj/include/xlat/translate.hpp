#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xlat/networks.hpp"
#include "xlat/tensor.hpp"

namespace xlat::infer {

/// x' = G(E(x), c_target). Accepts a single (C,H,W) image or a (B,C,H,W)
/// batch; normalization layers run in inference mode. The encoder and
/// generator must come from the same structural config.
Tensor<float> translate(model::Encoder& e, model::Generator& g,
                        const Tensor<float>& x, int c_target);

/// Forward and back: x_ab = translate(x, c_target), x_aba = translate(x_ab,
/// c_source). Returned in that order for cycle metrics.
std::pair<Tensor<float>, Tensor<float>> roundtrip(model::Encoder& e,
                                                  model::Generator& g,
                                                  const Tensor<float>& x,
                                                  int c_source, int c_target);

/// Tiles images row-major into a columns-wide grid, de-normalizes to 8-bit
/// and writes a portable image file. Empty cells are mid-gray.
void write_sample_grid(const std::vector<Tensor<float>>& images, int64_t columns,
                       const std::string& path);

/// Interleaves inputs and outputs so that inputs sit at odd columns and
/// their translations at the following even columns.
std::vector<Tensor<float>> interleave_pairs(const std::vector<Tensor<float>>& inputs,
                                            const std::vector<Tensor<float>>& outputs);

}  // namespace xlat::infer
