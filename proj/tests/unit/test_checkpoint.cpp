#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "xlat/shapes.hpp"
#include "xlat/trainer.hpp"

using namespace xlat;
using namespace xlat::train;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("xlat_ckpt_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

Checkpoint small_checkpoint() {
  RunConfig cfg;
  cfg.image_size = 32;
  cfg.base_channels = 4;
  cfg.z_dim = 8;
  cfg.batch_size = 8;
  cfg.step1_epochs = 1;
  cfg.seed = 13;
  data::ShapesSpec spec;
  spec.n_per_domain = 8;
  spec.seed = 2;
  return run_step1(data::build_shapes_dataset(spec), cfg);
}

}  // namespace

TEST_CASE("checkpoint save -> load -> save is byte-identical") {
  Checkpoint ckpt = small_checkpoint();
  const fs::path d1 = temp_dir("rt1"), d2 = temp_dir("rt2");
  save_checkpoint(ckpt, d1.string());
  Checkpoint loaded = load_checkpoint(d1.string());
  save_checkpoint(loaded, d2.string());
  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(slurp(d1 / "tensors.bin") == slurp(d2 / "tensors.bin"));

  CHECK(loaded.step1_iters == ckpt.step1_iters);
  CHECK(loaded.step1_rng_draws == ckpt.step1_rng_draws);
  CHECK(loaded.adam_d_t == ckpt.adam_d_t);
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (size_t i = 0; i < ckpt.tensors.size(); ++i)
    CHECK(loaded.tensors[i].value == ckpt.tensors[i].value);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("manifest edited to a wrong shape fails naming the tensor") {
  Checkpoint ckpt = small_checkpoint();
  const fs::path dir = temp_dir("tamper");
  save_checkpoint(ckpt, dir.string());

  nlohmann::json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    in >> manifest;
  }
  manifest["tensors"][0]["shape"][0] = manifest["tensors"][0]["shape"][0].get<int64_t>() + 1;
  const std::string victim = manifest["tensors"][0]["name"].get<std::string>();
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir.string()),
                       doctest::Contains(victim.c_str()), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("truncated tensor blob fails naming the tensor") {
  Checkpoint ckpt = small_checkpoint();
  const fs::path dir = temp_dir("trunc");
  save_checkpoint(ckpt, dir.string());
  const auto full = slurp(dir / "tensors.bin");
  {
    std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    out.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir.string()), doctest::Contains("truncated"),
                       LoadError);
  fs::remove_all(dir);
}

TEST_CASE("corrupted bytes fail the per-tensor checksum") {
  Checkpoint ckpt = small_checkpoint();
  const fs::path dir = temp_dir("crc");
  save_checkpoint(ckpt, dir.string());
  auto bytes = slurp(dir / "tensors.bin");
  bytes[bytes.size() / 3] ^= 0x40;
  {
    std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir.string()), doctest::Contains("checksum"),
                       LoadError);
  fs::remove_all(dir);
}

TEST_CASE("format version mismatch is rejected") {
  Checkpoint ckpt = small_checkpoint();
  const fs::path dir = temp_dir("ver");
  save_checkpoint(ckpt, dir.string());
  nlohmann::json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    in >> manifest;
  }
  manifest["format_version"] = 999;
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir.string()),
                       doctest::Contains("version"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints from a different geometry are rejected on use") {
  Checkpoint ckpt = small_checkpoint();
  RunConfig other = ckpt.config;
  other.image_size = 64;
  CHECK(!ckpt.config.structure_matches(other));
  data::ShapesSpec spec;
  spec.n_per_domain = 8;
  auto ds = data::build_shapes_dataset(spec);

  CHECK_THROWS_AS((void)run_step2(ckpt, other), ConfigError);
  CHECK_THROWS_AS((void)run_step1(ds, ckpt.config, {}, std::optional<Checkpoint>([&] {
                    Checkpoint c = ckpt;
                    c.config.image_size = 64;
                    return c;
                  }())),
                  ConfigError);
}
