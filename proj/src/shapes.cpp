#include "xlat/shapes.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xlat/errors.hpp"
#include "xlat/image_io.hpp"

namespace fs = std::filesystem;

namespace xlat::data {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::array<float, 3>> ShapesSpec::default_palette() {
  return {{{1.f, -1.f, -1.f}},   // red
          {{-1.f, 1.f, -1.f}},   // green
          {{-1.f, -1.f, 1.f}},   // blue
          {{1.f, 1.f, -1.f}},    // yellow
          {{1.f, -1.f, 1.f}},    // magenta
          {{-1.f, 1.f, 1.f}}};   // cyan
}

void ShapesSpec::validate() const {
  if (image_size < 8) throw ConfigError("shapes: image_size must be at least 8");
  if (n_per_domain < 1) throw ConfigError("shapes: n_per_domain must be at least 1");
  if (!(size_min > 0) || !(size_max >= size_min))
    throw ConfigError("shapes: need 0 < size_min <= size_max");
  if (margin < 0) throw ConfigError("shapes: margin must be nonnegative");
  if (margin + size_max > static_cast<double>(image_size) / 2.0)
    throw ConfigError("shapes: margin + size_max exceeds half the image; shapes would leave the frame");
  if (palette.size() < 2) throw ConfigError("shapes: palette needs at least 2 colors");
  for (const auto& c : palette)
    for (float v : c)
      if (!(v >= -1.f && v <= 1.f)) throw ConfigError("shapes: palette values must be in [-1, 1]");
  if (!(bg_min >= -1.0) || !(bg_max <= 1.0) || !(bg_min <= bg_max))
    throw ConfigError("shapes: background range must satisfy -1 <= min <= max <= 1");
}

ordered_json ShapesSpec::to_json() const {
  ordered_json j;
  j["image_size"] = image_size;
  j["n_per_domain"] = n_per_domain;
  j["margin"] = margin;
  j["size_min"] = size_min;
  j["size_max"] = size_max;
  ordered_json pal = ordered_json::array();
  for (const auto& c : palette) pal.push_back({c[0], c[1], c[2]});
  j["palette"] = pal;
  j["bg_min"] = bg_min;
  j["bg_max"] = bg_max;
  j["seed"] = seed;
  return j;
}

ShapesSpec ShapesSpec::from_json(const json& j) {
  ShapesSpec s;
  s.image_size = j.at("image_size").get<int64_t>();
  s.n_per_domain = j.at("n_per_domain").get<int64_t>();
  s.margin = j.at("margin").get<double>();
  s.size_min = j.at("size_min").get<double>();
  s.size_max = j.at("size_max").get<double>();
  s.palette.clear();
  for (const auto& c : j.at("palette"))
    s.palette.push_back({c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
  s.bg_min = j.at("bg_min").get<double>();
  s.bg_max = j.at("bg_max").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

std::pair<Tensor<float>, SampleAttributes> generate_shapes_sample(
    int domain, const ShapesSpec& spec, SeededRng& rng) {
  if (domain != 0 && domain != 1)
    throw DomainError("generate_shapes_sample: domain must be 0 (circle) or 1 (square)");
  spec.validate();

  SampleAttributes attrs;
  attrs.size = rng.uniform(spec.size_min, spec.size_max);
  const double lo = spec.margin + attrs.size;
  const double hi = static_cast<double>(spec.image_size) - spec.margin - attrs.size;
  attrs.center_x = rng.uniform(lo, hi);
  attrs.center_y = rng.uniform(lo, hi);
  attrs.color_index = static_cast<int>(rng.uniform_int(static_cast<int64_t>(spec.palette.size())));
  const float bg = static_cast<float>(rng.uniform(spec.bg_min, spec.bg_max));

  const auto& fg = spec.palette[static_cast<size_t>(attrs.color_index)];
  const int64_t s = spec.image_size;
  constexpr int kSS = 4;  // supersampling factor
  const double inv_ss = 1.0 / kSS;

  Tensor<float> img({ShapesSpec::kChannels, s, s});
  const int64_t plane = s * s;
  for (int64_t py = 0; py < s; ++py) {
    for (int64_t px = 0; px < s; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSS; ++sy) {
        const double y = static_cast<double>(py) + (sy + 0.5) * inv_ss;
        for (int sx = 0; sx < kSS; ++sx) {
          const double x = static_cast<double>(px) + (sx + 0.5) * inv_ss;
          bool inside;
          if (domain == 0) {
            const double dx = x - attrs.center_x, dy = y - attrs.center_y;
            inside = dx * dx + dy * dy <= attrs.size * attrs.size;
          } else {
            inside = std::fabs(x - attrs.center_x) <= attrs.size &&
                     std::fabs(y - attrs.center_y) <= attrs.size;
          }
          hits += inside ? 1 : 0;
        }
      }
      const float cov = static_cast<float>(hits) / (kSS * kSS);
      for (int64_t c = 0; c < ShapesSpec::kChannels; ++c) {
        const float v = bg + cov * (fg[static_cast<size_t>(c)] - bg);
        // quantize to the 8-bit grid so disk round-trips are exact
        const int q = std::clamp(static_cast<int>(std::lround((v + 1.0f) * 127.5f)), 0, 255);
        img[c * plane + py * s + px] = static_cast<float>(q) / 127.5f - 1.0f;
      }
    }
  }
  return {std::move(img), attrs};
}

LabeledDataset build_shapes_dataset(const ShapesSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  LabeledDataset ds;
  ds.image_size = spec.image_size;
  ds.channels = ShapesSpec::kChannels;
  ds.k = ShapesSpec::kDomains;
  const int64_t total = spec.n_per_domain * ShapesSpec::kDomains;
  ds.images.reserve(static_cast<size_t>(total));
  ds.labels.reserve(static_cast<size_t>(total));
  ds.attrs.reserve(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) {
    const int domain = static_cast<int>(i % ShapesSpec::kDomains);
    auto [img, attrs] = generate_shapes_sample(domain, spec, rng);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(domain);
    ds.attrs.push_back(attrs);
  }
  ds.provenance.kind = "synthetic-shapes";
  ds.provenance.details = spec.to_json();
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "index.csv");
  if (!csv) throw IoError("cannot write index.csv under " + dir);
  csv << "filename,domain,center_x,center_y,size,color_index\n";
  char buf[160];
  for (int64_t i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "img_%06lld.png", static_cast<long long>(i));
    const std::string name = buf;
    io::write_image((fs::path(dir) / name).string(), io::to_u8(ds.images[static_cast<size_t>(i)]));
    SampleAttributes a;
    if (ds.has_attributes()) a = ds.attrs[static_cast<size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%d", name.c_str(),
                  ds.labels[static_cast<size_t>(i)], a.center_x, a.center_y, a.size,
                  a.color_index);
    csv << buf << "\n";
  }
  std::ofstream spec_out(fs::path(dir) / "spec.json");
  if (!spec_out) throw IoError("cannot write spec.json under " + dir);
  ordered_json meta;
  meta["kind"] = ds.provenance.kind;
  meta["k"] = ds.k;
  meta["image_size"] = ds.image_size;
  meta["channels"] = ds.channels;
  meta["details"] = ds.provenance.details;
  spec_out << meta.dump(2) << "\n";
}

LabeledDataset load_shapes_dataset(const std::string& dir) {
  std::ifstream spec_in(fs::path(dir) / "spec.json");
  if (!spec_in) throw IoError("missing spec.json under " + dir);
  json meta;
  spec_in >> meta;

  LabeledDataset ds;
  ds.k = meta.at("k").get<int64_t>();
  ds.image_size = meta.at("image_size").get<int64_t>();
  ds.channels = meta.at("channels").get<int64_t>();
  ds.provenance.kind = meta.at("kind").get<std::string>();
  ds.provenance.details = meta.at("details");

  std::ifstream csv(fs::path(dir) / "index.csv");
  if (!csv) throw IoError("missing index.csv under " + dir);
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    char name[128];
    int domain = 0, color = 0;
    double cx = 0, cy = 0, size = 0;
    if (std::sscanf(line.c_str(), "%127[^,],%d,%lf,%lf,%lf,%d", name, &domain, &cx,
                    &cy, &size, &color) != 6)
      throw DataError("index.csv: malformed row: " + line);
    auto img = io::read_image((fs::path(dir) / name).string());
    ds.images.push_back(io::to_float(img, ds.channels));
    ds.labels.push_back(domain);
    ds.attrs.push_back({cx, cy, size, color});
  }
  if (ds.images.empty()) throw DataError("dataset at " + dir + " holds no samples");
  return ds;
}

}  // namespace xlat::data
