#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xlat/dataset.hpp"
#include "xlat/rng.hpp"

namespace xlat::data {

/// Two-domain synthetic dataset: domain 0 renders filled circles, domain 1
/// filled axis-aligned squares. Both domains draw position, size, color and
/// background from identical distributions, so only geometry separates them.
struct ShapesSpec {
  int64_t image_size = 32;
  int64_t n_per_domain = 5000;
  double margin = 6.0;     // minimum gap between shape edge and image border
  double size_min = 6.0;   // radius / half-side, in pixels
  double size_max = 10.0;
  std::vector<std::array<float, 3>> palette = default_palette();
  double bg_min = -0.2, bg_max = 0.2;  // uniform gray background, [-1,1] units
  uint64_t seed = 1;

  static std::vector<std::array<float, 3>> default_palette();
  static constexpr int64_t kDomains = 2;
  static constexpr int64_t kChannels = 3;

  void validate() const;  // throws ConfigError if shapes could leave the frame
  nlohmann::ordered_json to_json() const;
  static ShapesSpec from_json(const nlohmann::json& j);
};

/// Renders one anti-aliased sample (4x supersampling, box downsample).
/// Pixel values are quantized to the 8-bit grid so that the in-memory image
/// equals its serialized form exactly. Consumes a fixed five draws.
std::pair<Tensor<float>, SampleAttributes> generate_shapes_sample(
    int domain, const ShapesSpec& spec, SeededRng& rng);

/// n_per_domain samples per domain, domains interleaved; deterministic
/// given spec.seed.
LabeledDataset build_shapes_dataset(const ShapesSpec& spec);

/// On-disk layout: one PNG per sample, index.csv
/// (filename,domain,center_x,center_y,size,color_index), spec.json.
void save_dataset(const LabeledDataset& ds, const std::string& dir);
LabeledDataset load_shapes_dataset(const std::string& dir);

}  // namespace xlat::data
