#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlat/adam.hpp"
#include "xlat/config.hpp"
#include "xlat/layers.hpp"
#include "xlat/tensor.hpp"

namespace xlat::train {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Everything needed to resume a run exactly: config snapshot, network
/// parameters and buffers, Adam moments, step counters and RNG draw counts.
struct Checkpoint {
  RunConfig config;
  int64_t step1_epochs_done = 0;
  int64_t step1_iters = 0;
  int64_t step2_iters = 0;
  int64_t adam_g_t = 0, adam_d_t = 0, adam_e_t = 0;
  uint64_t step1_rng_draws = 0;
  uint64_t step2_rng_draws = 0;
  bool has_g = false, has_d = false, has_e = false;
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(const std::string& name) const;
  const Tensor<float>& require(const std::string& name) const;  // LoadError if absent

  /// Copies current values out of a parameter/buffer list.
  void add_params(const std::vector<nn::ParamRef<float>>& params);
  void add_buffers(const std::vector<nn::BufferRef<float>>& buffers);
  void add_adam(const std::string& opt_name,
                const std::vector<nn::ParamRef<float>>& params,
                const AdamStateT<float>& state);

  /// Copies stored values back into live tensors; shape mismatches and
  /// missing names raise LoadError naming the tensor.
  void restore_params(const std::vector<nn::ParamRef<float>>& params) const;
  void restore_buffers(const std::vector<nn::BufferRef<float>>& buffers) const;
  AdamStateT<float> restore_adam(const std::string& opt_name,
                                 const std::vector<nn::ParamRef<float>>& params) const;
};

/// Directory layout: manifest.json (config, counters, tensor table with
/// offsets and crc32 checksums) + tensors.bin (raw float32 little-endian).
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace xlat::train
