#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xlat/config.hpp"
#include "xlat/layers.hpp"
#include "xlat/rng.hpp"
#include "xlat/tensor.hpp"

namespace xlat::model {

using train::RunConfig;

/// One-hot basis vector or a row of the learned embedding table.
struct LabelVector {
  std::string mode;  // "one-hot" | "embedding"
  std::vector<float> values;
};

/// encode_label: one-hot needs only k; embedding mode reads row `id` of the
/// (k, embed_dim) table. Throws DomainError for ids outside [0, k).
LabelVector encode_label(int id, const std::string& mode, int64_t k,
                         const Tensor<float>* embed_table = nullptr);

struct DiscOutput {
  Tensor<float> source_logits;  // (B)
  Tensor<float> class_logits;   // (B, K)
};

/// DCGAN-style conditional generator. concat(z, label vector) -> dense ->
/// 4x4 feature map -> stride-2 transposed convolutions -> tanh image.
/// Hidden blocks carry batchnorm + ReLU; the output block does not.
class Generator {
 public:
  Generator(const RunConfig& cfg, SeededRng& rng);

  /// z: (B, z_dim) with components in [-1, 1]; labels: B domain ids.
  Tensor<float> forward(const Tensor<float>& z, const std::vector<int>& labels);

  /// Accumulates parameter gradients (including the embedding table).
  void backward(const Tensor<float>& grad_images);

  void set_training(bool training);
  void zero_grad();
  std::vector<nn::ParamRef<float>> params();
  std::vector<nn::BufferRef<float>> buffers();

  const RunConfig& config() const { return cfg_; }
  const Tensor<float>* embed_table() const {
    return cfg_.one_hot() ? nullptr : &embed_.table;
  }

 private:
  RunConfig cfg_;
  int64_t blocks_ = 0, c0_ = 0;
  nn::EmbeddingT<float> embed_;
  nn::DenseT<float> fc_;
  nn::BatchNorm2dT<float> bn0_;
  nn::ReLUT<float> act0_;
  std::vector<nn::ConvTranspose2dT<float>> ups_;
  std::vector<nn::BatchNorm2dT<float>> bns_;
  std::vector<nn::ReLUT<float>> acts_;
  nn::TanhT<float> out_act_;
  int64_t cached_batch_ = 0;
};

/// Convolutional trunk shared by the discriminator and encoder: stride-2
/// conv blocks with leaky ReLU, batchnorm on all but the first.
class ConvTrunk {
 public:
  ConvTrunk() = default;
  ConvTrunk(const std::string& prefix, const RunConfig& cfg, SeededRng& rng);

  Tensor<float> forward(const Tensor<float>& x);  // -> (B, flat_dim)
  Tensor<float> backward(const Tensor<float>& grad_flat, bool need_input_grad,
                         bool accumulate_param_grads);

  int64_t flat_dim() const { return flat_dim_; }
  void set_training(bool training);
  void zero_grad();
  void collect(std::vector<nn::ParamRef<float>>& out);
  void collect_buffers(std::vector<nn::BufferRef<float>>& out);

 private:
  std::string prefix_;
  int64_t blocks_ = 0, flat_dim_ = 0;
  std::vector<int64_t> flat_shape_;
  std::vector<nn::Conv2dT<float>> convs_;
  std::vector<nn::BatchNorm2dT<float>> bns_;  // blocks_ - 1 entries
  std::vector<nn::LeakyReLUT<float>> acts_;
};

/// Auxiliary-classifier discriminator: shared trunk, one real/fake logit head
/// and one K-way class head. Receives no label input.
class Discriminator {
 public:
  Discriminator(const RunConfig& cfg, SeededRng& rng);

  /// Rejects non-finite or out-of-range pixels with DataError.
  DiscOutput forward(const Tensor<float>& x);
  Tensor<float> backward(const Tensor<float>& grad_source,
                         const Tensor<float>& grad_class,
                         bool need_input_grad = false,
                         bool accumulate_param_grads = true);

  void set_training(bool training);
  void zero_grad();
  std::vector<nn::ParamRef<float>> params();
  std::vector<nn::BufferRef<float>> buffers();
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  ConvTrunk trunk_;
  nn::DenseT<float> head_src_, head_cls_;
};

/// Image encoder: the discriminator trunk with a tanh-bounded dense head of
/// width z_dim. Takes the image only; no label input.
class Encoder {
 public:
  Encoder(const RunConfig& cfg, SeededRng& rng);

  Tensor<float> forward(const Tensor<float>& x);  // -> (B, z_dim) in (-1, 1)
  void backward(const Tensor<float>& grad_z);

  void set_training(bool training);
  void zero_grad();
  std::vector<nn::ParamRef<float>> params();
  std::vector<nn::BufferRef<float>> buffers();
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  ConvTrunk trunk_;
  nn::DenseT<float> head_;
  nn::TanhT<float> out_act_;
};

struct Models {
  std::unique_ptr<Generator> g;
  std::unique_ptr<Discriminator> d;
  std::unique_ptr<Encoder> e;
};

/// Allocates and initializes all three networks. Deterministic given
/// (config, rng state); validates the config first.
Models init_params(const RunConfig& cfg, SeededRng& rng);

/// Weight init shared by every network: conv/dense N(0, 0.02), biases zero,
/// embedding tables U(-0.05, 0.05).
void init_dense(nn::DenseT<float>& layer, SeededRng& rng);
void init_conv(nn::Conv2dT<float>& layer, SeededRng& rng);
void init_deconv(nn::ConvTranspose2dT<float>& layer, SeededRng& rng);
void init_embedding(nn::EmbeddingT<float>& layer, SeededRng& rng);

/// Shared input contract: finite pixels in [-1, 1], shape (B, C, S, S).
void check_image_batch(const Tensor<float>& x, int64_t channels, int64_t size,
                       const char* who);

}  // namespace xlat::model
