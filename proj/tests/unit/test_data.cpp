#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xlat/augment.hpp"
#include "xlat/folder.hpp"
#include "xlat/image_io.hpp"
#include "xlat/shapes.hpp"

using namespace xlat;
using namespace xlat::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("xlat_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Intensity-weighted centroid against the median background (mirrors the
// evaluation definition, recomputed here independently).
std::pair<double, double> centroid_of(const Tensor<float>& img) {
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<float> med(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<float> vals(img.data() + ch * h * w, img.data() + (ch + 1) * h * w);
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    med[static_cast<size_t>(ch)] = vals[vals.size() / 2];
  }
  double mass = 0, mx = 0, my = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double wgt = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        wgt += std::fabs(img[(ch * h + y) * w + x] - med[static_cast<size_t>(ch)]);
      mass += wgt;
      mx += wgt * (static_cast<double>(x) + 0.5);
      my += wgt * (static_cast<double>(y) + 0.5);
    }
  return {mx / mass, my / mass};
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() -
                              static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("shapes sample: deterministic, centered, sized as specified") {
  ShapesSpec spec;
  spec.n_per_domain = 1;
  SeededRng r1(5), r2(5);
  auto [img1, a1] = generate_shapes_sample(0, spec, r1);
  auto [img2, a2] = generate_shapes_sample(0, spec, r2);
  CHECK(img1 == img2);
  CHECK(a1.center_x == a2.center_x);

  // centroid within 1 px of the attribute center
  for (int domain : {0, 1}) {
    SeededRng rng(17);
    for (int it = 0; it < 20; ++it) {
      auto [img, attrs] = generate_shapes_sample(domain, spec, rng);
      auto [cx, cy] = centroid_of(img);
      CHECK(std::fabs(cx - attrs.center_x) <= 1.0);
      CHECK(std::fabs(cy - attrs.center_y) <= 1.0);
    }
  }
}

TEST_CASE("square coverage matches the (2*size)^2 area within 10%") {
  ShapesSpec spec;
  SeededRng rng(23);
  for (int it = 0; it < 20; ++it) {
    auto [img, attrs] = generate_shapes_sample(1, spec, rng);
    // count coverage via deviation from the median background on one channel
    const int64_t h = img.dim(1), w = img.dim(2);
    std::vector<float> vals(img.data(), img.data() + h * w);
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    const float med = vals[vals.size() / 2];
    float fg_peak = 0;
    for (int64_t i = 0; i < h * w; ++i) fg_peak = std::max(fg_peak, std::fabs(img[i] - med));
    double area = 0;
    for (int64_t i = 0; i < h * w; ++i) area += std::fabs(img[i] - med) / fg_peak;
    const double want = 4.0 * attrs.size * attrs.size;
    CHECK(area == doctest::Approx(want).epsilon(0.10));
  }
}

TEST_CASE("both domains draw attributes from identical distributions (KS < 0.05)") {
  ShapesSpec spec;
  spec.n_per_domain = 5000;
  LabeledDataset ds = build_shapes_dataset(spec);
  std::vector<double> cx0, cx1, sz0, sz1, cy0, cy1;
  for (int64_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.attrs[static_cast<size_t>(i)];
    if (ds.labels[static_cast<size_t>(i)] == 0) {
      cx0.push_back(a.center_x);
      cy0.push_back(a.center_y);
      sz0.push_back(a.size);
    } else {
      cx1.push_back(a.center_x);
      cy1.push_back(a.center_y);
      sz1.push_back(a.size);
    }
  }
  CHECK(ks_statistic(cx0, cx1) < 0.05);
  CHECK(ks_statistic(cy0, cy1) < 0.05);
  CHECK(ks_statistic(sz0, sz1) < 0.05);
}

TEST_CASE("build_shapes_dataset counts, determinism and disk round-trip") {
  ShapesSpec spec;
  spec.n_per_domain = 5;
  spec.seed = 99;
  LabeledDataset a = build_shapes_dataset(spec);
  CHECK(a.size() == 10);
  auto counts = a.per_domain_counts();
  CHECK(counts[0] == 5);
  CHECK(counts[1] == 5);
  CHECK(a.covers_all_domains());

  LabeledDataset b = build_shapes_dataset(spec);
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(a.images[static_cast<size_t>(i)] == b.images[static_cast<size_t>(i)]);

  const fs::path dir = temp_dir("shapes_roundtrip");
  save_dataset(a, dir.string());
  CHECK(fs::exists(dir / "index.csv"));
  CHECK(fs::exists(dir / "spec.json"));
  LabeledDataset c = load_shapes_dataset(dir.string());
  REQUIRE(c.size() == a.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(c.images[static_cast<size_t>(i)] == a.images[static_cast<size_t>(i)]);
    CHECK(c.labels[static_cast<size_t>(i)] == a.labels[static_cast<size_t>(i)]);
  }
  fs::remove_all(dir);
}

TEST_CASE("shapes spec validation rejects out-of-frame geometry") {
  ShapesSpec spec;
  spec.margin = 10;
  spec.size_max = 10;  // 10 + 10 > 16
  SeededRng rng(1);
  CHECK_THROWS_AS((void)generate_shapes_sample(0, spec, rng), ConfigError);
  CHECK_THROWS_AS((void)build_shapes_dataset(spec), ConfigError);

  ShapesSpec ok;
  SeededRng rng2(1);
  CHECK_THROWS_AS((void)generate_shapes_sample(2, ok, rng2), DomainError);
}

TEST_CASE("augment: disabled settings are the identity") {
  ShapesSpec spec;
  SeededRng rng(31);
  auto [img, attrs] = generate_shapes_sample(0, spec, rng);
  SeededRng arng(32);
  Tensor<float> out = augment(img, arng, train::AugmentSettings::all_disabled());
  CHECK(out == img);
}

TEST_CASE("augment: flip applied twice restores the original") {
  SeededRng rng(33);
  Tensor<float> img({3, 16, 16});
  rng.fill_uniform(img, -1, 1);
  train::AugmentSettings flip_only = train::AugmentSettings::all_disabled();
  flip_only.flip = true;

  // find a stream position where the flip fires
  SeededRng arng(34);
  Tensor<float> once;
  bool flipped = false;
  for (int attempt = 0; attempt < 64 && !flipped; ++attempt) {
    Tensor<float> candidate = augment(img, arng, flip_only);
    if (!(candidate == img)) {
      once = candidate;
      flipped = true;
    }
  }
  REQUIRE(flipped);
  // flipping the flipped image with a forced-flip stream
  SeededRng brng(0);
  Tensor<float> twice;
  bool applied = false;
  for (int attempt = 0; attempt < 64 && !applied; ++attempt) {
    Tensor<float> candidate = augment(once, brng, flip_only);
    if (!(candidate == once)) {
      twice = candidate;
      applied = true;
    }
  }
  REQUIRE(applied);
  CHECK(twice == img);
}

TEST_CASE("augment: flip frequency is near one half") {
  SeededRng rng(35);
  Tensor<float> img({1, 8, 8});
  rng.fill_uniform(img, -1, 1);
  train::AugmentSettings flip_only = train::AugmentSettings::all_disabled();
  flip_only.flip = true;
  SeededRng arng(36);
  int flips = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Tensor<float> out = augment(img, arng, flip_only);
    flips += !(out == img);
  }
  const double freq = static_cast<double>(flips) / n;
  CHECK(freq >= 0.48);
  CHECK(freq <= 0.52);
}

TEST_CASE("augment preserves shape and range with everything enabled") {
  ShapesSpec spec;
  SeededRng rng(37);
  auto [img, attrs] = generate_shapes_sample(1, spec, rng);
  train::AugmentSettings all;  // defaults: everything on
  SeededRng arng(38);
  for (int i = 0; i < 50; ++i) {
    Tensor<float> out = augment(img, arng, all);
    REQUIRE(out.shape() == img.shape());
    for (int64_t j = 0; j < out.numel(); ++j) {
      CHECK(out[j] >= -1.0f);
      CHECK(out[j] <= 1.0f);
    }
  }
}

TEST_CASE("augment consumes a fixed number of draws regardless of settings") {
  SeededRng a(40), b(40);
  Tensor<float> img({1, 8, 8});
  (void)augment(img, a, train::AugmentSettings{});
  (void)augment(img, b, train::AugmentSettings::all_disabled());
  CHECK(a.draws() == b.draws());
}

TEST_CASE("image io: u8/float round trip and endpoint mapping") {
  Tensor<float> img({3, 2, 2});
  img.fill(-1.0f);
  img[0] = 1.0f;
  auto u8 = io::to_u8(img);
  CHECK(u8.pixels[0] == 255);  // +1 -> 255
  CHECK(u8.pixels[1] == 0);    // -1 -> 0

  // quantization bound: re-ingestion moves any pixel by at most 1/127.5
  SeededRng rng(41);
  Tensor<float> noise({3, 8, 8});
  rng.fill_uniform(noise, -1, 1);
  auto back = io::to_float(io::to_u8(noise), 3);
  for (int64_t i = 0; i < noise.numel(); ++i)
    CHECK(std::fabs(back[i] - noise[i]) <= 1.0f / 127.5f + 1e-6f);
}

TEST_CASE("image io: png and pnm files round-trip exactly") {
  const fs::path dir = temp_dir("imageio");
  SeededRng rng(42);
  Tensor<float> img({3, 9, 7});
  rng.fill_uniform(img, -1, 1);
  auto u8 = io::to_u8(img);

  io::write_image((dir / "a.png").string(), u8);
  auto png = io::read_image((dir / "a.png").string());
  CHECK(png.pixels == u8.pixels);
  CHECK(png.width == 7);
  CHECK(png.height == 9);

  io::write_image((dir / "a.ppm").string(), u8);
  auto ppm = io::read_image((dir / "a.ppm").string());
  CHECK(ppm.pixels == u8.pixels);
  fs::remove_all(dir);
}

TEST_CASE("load_image_folder: counting, labels, normalization, skip behavior") {
  const fs::path root = temp_dir("folder");
  fs::create_directories(root / "circles");
  fs::create_directories(root / "squares");

  io::ImageU8 white;
  white.width = white.height = 8;
  white.channels = 3;
  white.pixels.assign(8 * 8 * 3, 255);
  io::write_image((root / "circles" / "w1.png").string(), white);
  io::write_image((root / "circles" / "w2.png").string(), white);
  io::write_image((root / "circles" / "w3.png").string(), white);

  io::ImageU8 tall;  // non-square: 8x16, half black half white columns
  tall.width = 8;
  tall.height = 16;
  tall.channels = 3;
  tall.pixels.assign(8 * 16 * 3, 128);
  for (int i = 0; i < 4; ++i) io::write_image((root / "squares" / ("t" + std::to_string(i) + ".png")).string(), tall);
  {
    std::ofstream junk(root / "squares" / "notes.txt");
    junk << "not an image";
  }

  auto ds = load_image_folder(root.string(), {{"circles", 0}, {"squares", 1}}, 8);
  CHECK(ds.size() == 7);
  auto counts = ds.per_domain_counts();
  CHECK(counts[0] == 3);
  CHECK(counts[1] == 4);
  CHECK(ds.provenance.skipped == 1);

  // all-white source -> all values 1.0 after scaling
  for (int64_t i = 0; i < ds.images[0].numel(); ++i)
    CHECK(ds.images[0][i] == doctest::Approx(1.0f));
  // non-square source center-cropped to image_size^2
  CHECK(ds.images[3].shape() == std::vector<int64_t>{3, 8, 8});

  CHECK_THROWS_AS((void)load_image_folder(root.string(), {{"circles", 0}, {"missing", 1}}, 8),
                  ConfigError);
  fs::remove_all(root);
}
