#include "xlat/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "xlat/errors.hpp"

namespace xlat::train {

using nlohmann::json;
using nlohmann::ordered_json;

int64_t RunConfig::label_dim() const { return one_hot() ? k : embed_dim; }

void RunConfig::validate() const {
  auto positive = [](int64_t v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(z_dim, "z_dim");
  if (k < 2) throw ConfigError("k: at least two domains are required");
  if (image_size != 32 && image_size != 64)
    throw ConfigError("image_size must be 32 or 64");
  positive(channels, "channels");
  if (label_mode != "embedding" && label_mode != "one-hot")
    throw ConfigError("label_mode must be \"embedding\" or \"one-hot\"");
  positive(embed_dim, "embed_dim");
  positive(base_channels, "base_channels");
  positive(batch_size, "batch_size");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (step1_epochs < 0) throw ConfigError("step1_epochs must be nonnegative");
  if (step2_steps < 0) throw ConfigError("step2_steps must be nonnegative");
  positive(d_steps_per_g_step, "d_steps_per_g_step");
  if (aug.rotate_max_deg < 0) throw ConfigError("aug_rotate_deg must be nonnegative");
  if (!(aug.zoom_min >= 1.0) || !(aug.zoom_max >= aug.zoom_min))
    throw ConfigError("aug_zoom_min/aug_zoom_max must satisfy 1 <= min <= max");
  positive(grid_every, "grid_every");
  positive(step2_checkpoint_every, "step2_checkpoint_every");
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["z_dim"] = z_dim;
  j["k"] = k;
  j["image_size"] = image_size;
  j["channels"] = channels;
  j["label_mode"] = label_mode;
  j["embed_dim"] = embed_dim;
  j["base_channels"] = base_channels;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["step1_epochs"] = step1_epochs;
  j["step2_steps"] = step2_steps;
  j["d_steps_per_g_step"] = d_steps_per_g_step;
  j["ac_on_fake_for_d"] = ac_on_fake_for_d;
  j["aug_flip"] = aug.flip;
  j["aug_rotate"] = aug.rotate;
  j["aug_rotate_deg"] = aug.rotate_max_deg;
  j["aug_zoom"] = aug.zoom;
  j["aug_zoom_min"] = aug.zoom_min;
  j["aug_zoom_max"] = aug.zoom_max;
  j["grid_every"] = grid_every;
  j["step2_checkpoint_every"] = step2_checkpoint_every;
  j["seed"] = seed;
  return j;
}

namespace {

template <typename T>
T expect_number(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("config key \"" + key + "\": expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("config key \"" + key + "\": expected a number");
    return v.get<T>();
  } else {
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError("config key \"" + key + "\": expected an integer");
    return v.get<T>();
  }
}

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& key, const json& v) {
  if (key == "z_dim") cfg.z_dim = expect_number<int64_t>(v, key);
  else if (key == "k") cfg.k = expect_number<int64_t>(v, key);
  else if (key == "image_size") cfg.image_size = expect_number<int64_t>(v, key);
  else if (key == "channels") cfg.channels = expect_number<int64_t>(v, key);
  else if (key == "label_mode") {
    if (!v.is_string()) throw ConfigError("config key \"label_mode\": expected a string");
    cfg.label_mode = v.get<std::string>();
  } else if (key == "embed_dim") cfg.embed_dim = expect_number<int64_t>(v, key);
  else if (key == "base_channels") cfg.base_channels = expect_number<int64_t>(v, key);
  else if (key == "batch_size") cfg.batch_size = expect_number<int64_t>(v, key);
  else if (key == "lr") cfg.lr = expect_number<double>(v, key);
  else if (key == "adam_beta1") cfg.adam_beta1 = expect_number<double>(v, key);
  else if (key == "adam_beta2") cfg.adam_beta2 = expect_number<double>(v, key);
  else if (key == "adam_eps") cfg.adam_eps = expect_number<double>(v, key);
  else if (key == "step1_epochs") cfg.step1_epochs = expect_number<int64_t>(v, key);
  else if (key == "step2_steps") cfg.step2_steps = expect_number<int64_t>(v, key);
  else if (key == "d_steps_per_g_step") cfg.d_steps_per_g_step = expect_number<int64_t>(v, key);
  else if (key == "ac_on_fake_for_d") cfg.ac_on_fake_for_d = expect_number<bool>(v, key);
  else if (key == "aug_flip") cfg.aug.flip = expect_number<bool>(v, key);
  else if (key == "aug_rotate") cfg.aug.rotate = expect_number<bool>(v, key);
  else if (key == "aug_rotate_deg") cfg.aug.rotate_max_deg = expect_number<double>(v, key);
  else if (key == "aug_zoom") cfg.aug.zoom = expect_number<bool>(v, key);
  else if (key == "aug_zoom_min") cfg.aug.zoom_min = expect_number<double>(v, key);
  else if (key == "aug_zoom_max") cfg.aug.zoom_max = expect_number<double>(v, key);
  else if (key == "grid_every") cfg.grid_every = expect_number<int64_t>(v, key);
  else if (key == "step2_checkpoint_every") cfg.step2_checkpoint_every = expect_number<int64_t>(v, key);
  else if (key == "seed") cfg.seed = expect_number<uint64_t>(v, key);
  else throw ConfigError("unknown config key \"" + key + "\"");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    apply_config_key(cfg, it.key(), it.value());
  return cfg;
}

bool RunConfig::structure_matches(const RunConfig& o) const {
  return z_dim == o.z_dim && k == o.k && image_size == o.image_size &&
         channels == o.channels && label_mode == o.label_mode &&
         (one_hot() || embed_dim == o.embed_dim) &&
         base_channels == o.base_channels;
}

std::string RunConfig::structure_diff(const RunConfig& o) const {
  auto num = [](auto v) { return std::to_string(v); };
  std::string out;
  auto add = [&](const std::string& field, const std::string& a, const std::string& b) {
    if (a != b) out += (out.empty() ? "" : ", ") + field + ": " + a + " vs " + b;
  };
  add("z_dim", num(z_dim), num(o.z_dim));
  add("k", num(k), num(o.k));
  add("image_size", num(image_size), num(o.image_size));
  add("channels", num(channels), num(o.channels));
  add("label_mode", label_mode, o.label_mode);
  if (!one_hot()) add("embed_dim", num(embed_dim), num(o.embed_dim));
  add("base_channels", num(base_channels), num(o.base_channels));
  return out;
}

RunConfig parse_config(const std::string& file_path,
                       const std::vector<std::pair<std::string, std::string>>&
                           flag_overrides) {
  RunConfig cfg;
  if (!file_path.empty()) {
    std::ifstream in(file_path);
    if (!in) throw IoError("cannot open config file: " + file_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file_path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a flat JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      apply_config_key(cfg, it.key(), it.value());
  }
  for (const auto& [key, raw] : flag_overrides) {
    json v;
    try {
      v = json::parse(raw);
    } catch (const json::exception&) {
      v = raw;  // bare strings (e.g. label_mode=one-hot) pass through
    }
    apply_config_key(cfg, key, v);
  }
  cfg.validate();
  return cfg;
}

}  // namespace xlat::train
