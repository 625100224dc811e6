#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlat/tensor.hpp"

namespace xlat::data {

/// Ground-truth generative attributes kept beside each synthetic sample.
/// Centers are in pixel units (pixel i spans [i, i+1)).
struct SampleAttributes {
  double center_x = 0.0, center_y = 0.0;
  double size = 0.0;  // radius for circles, half-side for squares
  int color_index = 0;
};

struct DatasetProvenance {
  std::string kind;  // "synthetic-shapes" | "image-folder"
  nlohmann::ordered_json details;
  int64_t skipped = 0;  // undecodable files skipped during ingestion
};

struct LabeledDataset {
  int64_t image_size = 0, channels = 0, k = 0;
  std::vector<Tensor<float>> images;  // each (C, S, S), values in [-1, 1]
  std::vector<int> labels;
  std::vector<SampleAttributes> attrs;  // empty, or one entry per image
  DatasetProvenance provenance;

  int64_t size() const { return static_cast<int64_t>(images.size()); }
  bool has_attributes() const { return !attrs.empty(); }

  std::vector<int64_t> per_domain_counts() const {
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int y : labels) counts.at(static_cast<size_t>(y))++;
    return counts;
  }

  /// True when every domain in [0, K) has at least one sample.
  bool covers_all_domains() const {
    for (int64_t c : per_domain_counts())
      if (c == 0) return false;
    return true;
  }
};

}  // namespace xlat::data
