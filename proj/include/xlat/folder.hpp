#pragma once

#include <map>
#include <string>

#include "xlat/dataset.hpp"

namespace xlat::data {

/// Ingests a labeled-by-folder image tree: root/<dirname>/... where
/// domain_map assigns each dirname a domain id covering [0, K). Images are
/// center-cropped square, resized to image_size and scaled to [-1, 1].
/// Undecodable files are skipped and counted in the returned provenance;
/// an empty domain directory is a configuration error.
LabeledDataset load_image_folder(const std::string& root_path,
                                 const std::map<std::string, int>& domain_map,
                                 int64_t image_size, int64_t channels = 3);

}  // namespace xlat::data
