#include "xlat/networks.hpp"

#include <cmath>

#include "xlat/errors.hpp"

namespace xlat::model {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kEmbedInitRange = 0.05;
constexpr float kLeakySlope = 0.2f;

int64_t log2_exact(int64_t v) {
  int64_t p = 0;
  while ((int64_t{1} << p) < v) ++p;
  return ((int64_t{1} << p) == v) ? p : -1;
}

}  // namespace

void init_dense(nn::DenseT<float>& layer, SeededRng& rng) {
  rng.fill_normal(layer.weight, 0.0, kInitStd);
  layer.bias.zero();
}

void init_conv(nn::Conv2dT<float>& layer, SeededRng& rng) {
  rng.fill_normal(layer.weight, 0.0, kInitStd);
  layer.bias.zero();
}

void init_deconv(nn::ConvTranspose2dT<float>& layer, SeededRng& rng) {
  rng.fill_normal(layer.weight, 0.0, kInitStd);
  layer.bias.zero();
}

void init_embedding(nn::EmbeddingT<float>& layer, SeededRng& rng) {
  rng.fill_uniform(layer.table, -kEmbedInitRange, kEmbedInitRange);
}

void check_image_batch(const Tensor<float>& x, int64_t channels, int64_t size,
                       const char* who) {
  if (x.ndim() != 4 || x.dim(1) != channels || x.dim(2) != size || x.dim(3) != size)
    throw ContractError(std::string(who) + ": expected image batch (B," +
                        std::to_string(channels) + "," + std::to_string(size) +
                        "," + std::to_string(size) + "), got " +
                        Tensor<float>::shape_str(x.shape()));
  if (x.dim(0) == 0) throw ContractError(std::string(who) + ": empty batch");
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float v = x[i];
    if (!(v >= -1.0f && v <= 1.0f))  // catches NaN too
      throw DataError(std::string(who) + ": pixel values must be finite and in [-1, 1]");
  }
}

LabelVector encode_label(int id, const std::string& mode, int64_t k,
                         const Tensor<float>* embed_table) {
  if (id < 0 || id >= k) throw DomainError("encode_label: domain id out of range [0, K)");
  LabelVector out;
  out.mode = mode;
  if (mode == "one-hot") {
    out.values.assign(static_cast<size_t>(k), 0.0f);
    out.values[static_cast<size_t>(id)] = 1.0f;
  } else if (mode == "embedding") {
    if (embed_table == nullptr || embed_table->ndim() != 2 || embed_table->dim(0) != k)
      throw ContractError("encode_label: embedding mode needs a (K, embed_dim) table");
    const int64_t d = embed_table->dim(1);
    out.values.resize(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i)
      out.values[static_cast<size_t>(i)] = embed_table->at2(id, i);
  } else {
    throw ConfigError("encode_label: unknown label mode \"" + mode + "\"");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(const RunConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  const int64_t p = log2_exact(cfg.image_size);
  if (p < 3) throw ConfigError("generator requires a power-of-two image_size >= 8");
  blocks_ = p - 2;
  c0_ = cfg.base_channels << (blocks_ - 1);

  if (!cfg_.one_hot()) {
    embed_ = nn::EmbeddingT<float>(cfg.k, cfg.embed_dim);
    init_embedding(embed_, rng);
  }
  fc_ = nn::DenseT<float>(cfg.z_dim + cfg_.label_dim(), c0_ * 4 * 4);
  init_dense(fc_, rng);
  bn0_ = nn::BatchNorm2dT<float>(c0_);

  int64_t cin = c0_;
  for (int64_t i = 1; i <= blocks_; ++i) {
    const int64_t cout = (i == blocks_) ? cfg.channels : (c0_ >> i);
    ups_.emplace_back(cin, cout, 4, 2, 1);
    init_deconv(ups_.back(), rng);
    if (i < blocks_) {
      bns_.emplace_back(cout);
      acts_.emplace_back();
    }
    cin = cout;
  }
}

Tensor<float> Generator::forward(const Tensor<float>& z, const std::vector<int>& labels) {
  if (z.ndim() != 2 || z.dim(1) != cfg_.z_dim)
    throw ContractError("generator: latent batch must be (B, z_dim)");
  const int64_t batch = z.dim(0);
  if (batch == 0) throw ContractError("generator: empty batch");
  if (static_cast<int64_t>(labels.size()) != batch)
    throw ContractError("generator: latent and label batch sizes differ");
  for (int64_t i = 0; i < z.numel(); ++i)
    if (!(z[i] >= -1.0f && z[i] <= 1.0f))
      throw ContractError("generator: latent components must lie in [-1, 1]");
  for (int y : labels)
    if (y < 0 || y >= cfg_.k) throw DomainError("generator: label out of range [0, K)");
  cached_batch_ = batch;

  const int64_t ld = cfg_.label_dim();
  Tensor<float> input({batch, cfg_.z_dim + ld});
  if (cfg_.one_hot()) {
    for (int64_t b = 0; b < batch; ++b) {
      float* row = input.data() + b * (cfg_.z_dim + ld);
      const float* zs = z.data() + b * cfg_.z_dim;
      for (int64_t i = 0; i < cfg_.z_dim; ++i) row[i] = zs[i];
      for (int64_t i = 0; i < ld; ++i) row[cfg_.z_dim + i] = 0.0f;
      row[cfg_.z_dim + labels[static_cast<size_t>(b)]] = 1.0f;
    }
  } else {
    Tensor<float> lv = embed_.forward(labels);
    for (int64_t b = 0; b < batch; ++b) {
      float* row = input.data() + b * (cfg_.z_dim + ld);
      const float* zs = z.data() + b * cfg_.z_dim;
      const float* ls = lv.data() + b * ld;
      for (int64_t i = 0; i < cfg_.z_dim; ++i) row[i] = zs[i];
      for (int64_t i = 0; i < ld; ++i) row[cfg_.z_dim + i] = ls[i];
    }
  }

  Tensor<float> h = fc_.forward(input);
  h.reshape({batch, c0_, 4, 4});
  h = act0_.forward(bn0_.forward(h));
  for (size_t i = 0; i < ups_.size(); ++i) {
    h = ups_[i].forward(h);
    if (i + 1 < ups_.size()) h = acts_[i].forward(bns_[i].forward(h));
  }
  return out_act_.forward(h);
}

void Generator::backward(const Tensor<float>& grad_images) {
  Tensor<float> g = out_act_.backward(grad_images);
  for (size_t i = ups_.size(); i-- > 0;) {
    if (i + 1 < ups_.size()) g = bns_[i].backward(acts_[i].backward(g));
    g = ups_[i].backward(g);
  }
  g = bn0_.backward(act0_.backward(g));
  g.reshape({cached_batch_, c0_ * 4 * 4});
  Tensor<float> dinput = fc_.backward(g, /*need_input_grad=*/!cfg_.one_hot());
  if (!cfg_.one_hot()) {
    const int64_t ld = cfg_.label_dim();
    Tensor<float> dlabel({cached_batch_, ld});
    for (int64_t b = 0; b < cached_batch_; ++b)
      for (int64_t i = 0; i < ld; ++i)
        dlabel.at2(b, i) = dinput.at2(b, cfg_.z_dim + i);
    embed_.backward(dlabel);
  }
}

void Generator::set_training(bool training) {
  bn0_.training = training;
  for (auto& bn : bns_) bn.training = training;
}

void Generator::zero_grad() {
  if (!cfg_.one_hot()) embed_.zero_grad();
  fc_.zero_grad();
  bn0_.zero_grad();
  for (auto& up : ups_) up.zero_grad();
  for (auto& bn : bns_) bn.zero_grad();
}

std::vector<nn::ParamRef<float>> Generator::params() {
  std::vector<nn::ParamRef<float>> out;
  if (!cfg_.one_hot()) embed_.collect("G.embed", out);
  fc_.collect("G.fc", out);
  bn0_.collect("G.bn0", out);
  for (size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].collect("G.up" + std::to_string(i + 1), out);
    if (i + 1 < ups_.size()) bns_[i].collect("G.bn" + std::to_string(i + 1), out);
  }
  return out;
}

std::vector<nn::BufferRef<float>> Generator::buffers() {
  std::vector<nn::BufferRef<float>> out;
  bn0_.collect_buffers("G.bn0", out);
  for (size_t i = 0; i + 1 < ups_.size(); ++i)
    bns_[i].collect_buffers("G.bn" + std::to_string(i + 1), out);
  return out;
}

// ---------------------------------------------------------------------------
// ConvTrunk
// ---------------------------------------------------------------------------

ConvTrunk::ConvTrunk(const std::string& prefix, const RunConfig& cfg, SeededRng& rng)
    : prefix_(prefix) {
  const int64_t p = log2_exact(cfg.image_size);
  if (p < 2) throw ConfigError("conv trunk requires a power-of-two image_size >= 4");
  blocks_ = std::max<int64_t>(1, p - 2);

  int64_t cin = cfg.channels;
  int64_t size = cfg.image_size;
  for (int64_t i = 0; i < blocks_; ++i) {
    const int64_t cout = cfg.base_channels << i;
    convs_.emplace_back(cin, cout, 4, 2, 1);
    init_conv(convs_.back(), rng);
    if (i > 0) bns_.emplace_back(cout);
    acts_.emplace_back(kLeakySlope);
    cin = cout;
    size /= 2;
  }
  flat_shape_ = {0, cin, size, size};
  flat_dim_ = cin * size * size;
}

Tensor<float> ConvTrunk::forward(const Tensor<float>& x) {
  Tensor<float> h = x;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (i > 0) h = bns_[i - 1].forward(h);
    h = acts_[i].forward(h);
  }
  flat_shape_[0] = h.dim(0);
  h.reshape({h.dim(0), flat_dim_});
  return h;
}

Tensor<float> ConvTrunk::backward(const Tensor<float>& grad_flat,
                                  bool need_input_grad, bool accumulate_param_grads) {
  Tensor<float> g = grad_flat;
  g.reshape(flat_shape_);
  for (size_t i = convs_.size(); i-- > 0;) {
    g = acts_[i].backward(g);
    if (i > 0) g = bns_[i - 1].backward(g, true, accumulate_param_grads);
    const bool need = need_input_grad || i > 0;
    g = convs_[i].backward(g, need, accumulate_param_grads);
  }
  return g;
}

void ConvTrunk::set_training(bool training) {
  for (auto& bn : bns_) bn.training = training;
}

void ConvTrunk::zero_grad() {
  for (auto& c : convs_) c.zero_grad();
  for (auto& bn : bns_) bn.zero_grad();
}

void ConvTrunk::collect(std::vector<nn::ParamRef<float>>& out) {
  for (size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(prefix_ + ".conv" + std::to_string(i + 1), out);
    if (i > 0) bns_[i - 1].collect(prefix_ + ".bn" + std::to_string(i + 1), out);
  }
}

void ConvTrunk::collect_buffers(std::vector<nn::BufferRef<float>>& out) {
  for (size_t i = 1; i < convs_.size(); ++i)
    bns_[i - 1].collect_buffers(prefix_ + ".bn" + std::to_string(i + 1), out);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(const RunConfig& cfg, SeededRng& rng)
    : cfg_(cfg), trunk_("D", cfg, rng) {
  head_src_ = nn::DenseT<float>(trunk_.flat_dim(), 1);
  init_dense(head_src_, rng);
  head_cls_ = nn::DenseT<float>(trunk_.flat_dim(), cfg.k);
  init_dense(head_cls_, rng);
}

DiscOutput Discriminator::forward(const Tensor<float>& x) {
  check_image_batch(x, cfg_.channels, cfg_.image_size, "discriminator");
  Tensor<float> flat = trunk_.forward(x);
  DiscOutput out;
  out.source_logits = head_src_.forward(flat);
  out.source_logits.reshape({x.dim(0)});
  out.class_logits = head_cls_.forward(flat);
  return out;
}

Tensor<float> Discriminator::backward(const Tensor<float>& grad_source,
                                      const Tensor<float>& grad_class,
                                      bool need_input_grad,
                                      bool accumulate_param_grads) {
  const int64_t batch = grad_class.dim(0);
  Tensor<float> gs = grad_source;
  gs.reshape({batch, 1});
  Tensor<float> flat_a = head_src_.backward(gs, true, accumulate_param_grads);
  Tensor<float> flat_b = head_cls_.backward(grad_class, true, accumulate_param_grads);
  for (int64_t i = 0; i < flat_a.numel(); ++i) flat_a[i] += flat_b[i];
  return trunk_.backward(flat_a, need_input_grad, accumulate_param_grads);
}

void Discriminator::set_training(bool training) { trunk_.set_training(training); }

void Discriminator::zero_grad() {
  trunk_.zero_grad();
  head_src_.zero_grad();
  head_cls_.zero_grad();
}

std::vector<nn::ParamRef<float>> Discriminator::params() {
  std::vector<nn::ParamRef<float>> out;
  trunk_.collect(out);
  head_src_.collect("D.head_src", out);
  head_cls_.collect("D.head_cls", out);
  return out;
}

std::vector<nn::BufferRef<float>> Discriminator::buffers() {
  std::vector<nn::BufferRef<float>> out;
  trunk_.collect_buffers(out);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

Encoder::Encoder(const RunConfig& cfg, SeededRng& rng)
    : cfg_(cfg), trunk_("E", cfg, rng) {
  head_ = nn::DenseT<float>(trunk_.flat_dim(), cfg.z_dim);
  init_dense(head_, rng);
}

Tensor<float> Encoder::forward(const Tensor<float>& x) {
  check_image_batch(x, cfg_.channels, cfg_.image_size, "encoder");
  return out_act_.forward(head_.forward(trunk_.forward(x)));
}

void Encoder::backward(const Tensor<float>& grad_z) {
  Tensor<float> g = head_.backward(out_act_.backward(grad_z));
  trunk_.backward(g, /*need_input_grad=*/false, /*accumulate_param_grads=*/true);
}

void Encoder::set_training(bool training) { trunk_.set_training(training); }

void Encoder::zero_grad() {
  trunk_.zero_grad();
  head_.zero_grad();
}

std::vector<nn::ParamRef<float>> Encoder::params() {
  std::vector<nn::ParamRef<float>> out;
  trunk_.collect(out);
  head_.collect("E.head", out);
  return out;
}

std::vector<nn::BufferRef<float>> Encoder::buffers() {
  std::vector<nn::BufferRef<float>> out;
  trunk_.collect_buffers(out);
  return out;
}

Models init_params(const RunConfig& cfg, SeededRng& rng) {
  cfg.validate();
  Models m;
  m.g = std::make_unique<Generator>(cfg, rng);
  m.d = std::make_unique<Discriminator>(cfg, rng);
  m.e = std::make_unique<Encoder>(cfg, rng);
  return m;
}

}  // namespace xlat::model
