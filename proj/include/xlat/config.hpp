#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace xlat::train {

struct AugmentSettings {
  bool flip = true;
  bool rotate = true;
  double rotate_max_deg = 10.0;
  bool zoom = true;
  double zoom_min = 1.0;
  double zoom_max = 1.15;

  static AugmentSettings all_disabled() {
    AugmentSettings s;
    s.flip = s.rotate = s.zoom = false;
    return s;
  }
};

/// Resolved hyperparameters for a full run. Defaults follow the training
/// setup this artifact reproduces: z_dim 100, label embedding width 5,
/// lr 2e-4, Adam beta1 0.5, batch 64, 100 epochs / 20,000 steps.
struct RunConfig {
  int64_t z_dim = 100;
  int64_t k = 2;
  int64_t image_size = 32;
  int64_t channels = 3;
  std::string label_mode = "embedding";  // "embedding" | "one-hot"
  int64_t embed_dim = 5;
  int64_t base_channels = 64;
  int64_t batch_size = 64;
  double lr = 0.0002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t step1_epochs = 100;
  int64_t step2_steps = 20000;
  int64_t d_steps_per_g_step = 1;
  bool ac_on_fake_for_d = false;
  AugmentSettings aug;
  int64_t grid_every = 500;
  int64_t step2_checkpoint_every = 2000;
  uint64_t seed = 1;

  /// Width of the conditioning vector fed to the generator.
  int64_t label_dim() const;

  bool one_hot() const { return label_mode == "one-hot"; }

  /// Throws ConfigError naming the offending field.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// Fields that must agree for checkpoints to be interchangeable.
  bool structure_matches(const RunConfig& o) const;
  std::string structure_diff(const RunConfig& o) const;
};

/// Applies one flat key (as found in a config file or a --set override).
/// Unknown keys and type mismatches throw ConfigError naming the key.
void apply_config_key(RunConfig& cfg, const std::string& key,
                      const nlohmann::json& value);

/// defaults <- file (optional) <- overrides, then validate.
RunConfig parse_config(const std::string& file_path,
                       const std::vector<std::pair<std::string, std::string>>&
                           flag_overrides = {});

}  // namespace xlat::train
