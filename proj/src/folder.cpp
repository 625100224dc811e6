#include "xlat/folder.hpp"

#include <algorithm>
#include <filesystem>

#include "xlat/errors.hpp"
#include "xlat/image_io.hpp"

namespace fs = std::filesystem;

namespace xlat::data {

LabeledDataset load_image_folder(const std::string& root_path,
                                 const std::map<std::string, int>& domain_map,
                                 int64_t image_size, int64_t channels) {
  if (domain_map.empty()) throw ConfigError("load_image_folder: empty domain map");
  int64_t k = 0;
  for (const auto& [name, id] : domain_map) k = std::max<int64_t>(k, id + 1);
  {
    std::vector<bool> seen(static_cast<size_t>(k), false);
    for (const auto& [name, id] : domain_map) {
      if (id < 0) throw ConfigError("load_image_folder: negative domain id for " + name);
      seen[static_cast<size_t>(id)] = true;
    }
    for (int64_t i = 0; i < k; ++i)
      if (!seen[static_cast<size_t>(i)])
        throw ConfigError("load_image_folder: domain ids must cover [0, K) but " +
                          std::to_string(i) + " is unassigned");
  }

  LabeledDataset ds;
  ds.image_size = image_size;
  ds.channels = channels;
  ds.k = k;
  ds.provenance.kind = "image-folder";
  nlohmann::ordered_json dirs = nlohmann::ordered_json::object();

  // Deterministic order: by domain id, then by filename.
  std::vector<std::pair<int, std::string>> ordered;
  for (const auto& [name, id] : domain_map) ordered.emplace_back(id, name);
  std::sort(ordered.begin(), ordered.end());

  for (const auto& [id, name] : ordered) {
    const fs::path dir = fs::path(root_path) / name;
    if (!fs::is_directory(dir))
      throw ConfigError("load_image_folder: missing domain directory " + dir.string());
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());

    int64_t loaded = 0;
    for (const std::string& file : files) {
      io::ImageU8 img;
      try {
        img = io::read_image(file);
      } catch (const DataError&) {
        ds.provenance.skipped++;
        continue;
      }
      img = io::center_crop_square(img);
      if (img.width != image_size) img = io::resize_bilinear(img, image_size, image_size);
      ds.images.push_back(io::to_float(img, channels));
      ds.labels.push_back(id);
      ++loaded;
    }
    if (loaded == 0)
      throw ConfigError("load_image_folder: domain directory " + dir.string() +
                        " yielded no images");
    dirs[name] = loaded;
  }

  ds.provenance.details["root"] = root_path;
  ds.provenance.details["per_domain"] = dirs;
  return ds;
}

}  // namespace xlat::data
