#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlat/errors.hpp"
#include "xlat/tensor.hpp"

namespace xlat::objectives {

/// A minimized scalar plus its named additive breakdown. The value is always
/// the exact sum of the components.
struct LossValue {
  double value = 0.0;
  std::vector<std::pair<std::string, double>> components;

  double component(const std::string& name) const {
    for (const auto& [k, v] : components)
      if (k == name) return v;
    throw ContractError("loss component not present: " + name);
  }
};

/// log(1 + exp(x)) without overflow; exact for large |x|.
inline double softplus(double x) {
  return std::log1p(std::exp(-std::fabs(x))) + (x > 0.0 ? x : 0.0);
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace detail {

template <typename T>
double mean_softplus_neg(std::span<const T> logits) {
  // mean of -log sigmoid(l) = mean softplus(-l)
  double acc = 0.0;
  for (const T& l : logits) acc += softplus(-static_cast<double>(l));
  return acc / static_cast<double>(logits.size());
}

template <typename T>
double mean_softplus_pos(std::span<const T> logits) {
  // mean of -log(1 - sigmoid(l)) = mean softplus(l)
  double acc = 0.0;
  for (const T& l : logits) acc += softplus(static_cast<double>(l));
  return acc / static_cast<double>(logits.size());
}

template <typename T>
void check_class_inputs(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw ContractError("class logits must be (B, K)");
  if (logits.dim(0) != static_cast<int64_t>(labels.size()))
    throw ContractError("class logits and labels disagree on batch size");
  if (logits.dim(0) == 0) throw ContractError("empty batch");
  const int64_t k = logits.dim(1);
  for (int y : labels)
    if (y < 0 || y >= k) throw DomainError("class label out of range [0, K)");
}

template <typename T>
void check_nonempty(std::span<const T> logits, const char* what) {
  if (logits.empty()) throw ContractError(std::string(what) + ": empty batch");
}

}  // namespace detail

/// Mean categorical cross-entropy from logits: mean_b [logsumexp(row) - row[y]].
template <typename T>
double class_ce(const Tensor<T>& logits, const std::vector<int>& labels) {
  detail::check_class_inputs(logits, labels);
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  double acc = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = logits.data() + b * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    acc += mx + std::log(sum) - static_cast<double>(row[labels[static_cast<size_t>(b)]]);
  }
  return acc / static_cast<double>(batch);
}

/// d/dlogits of class_ce: (softmax - onehot) / B, added into grad.
template <typename T>
void class_ce_grad(const Tensor<T>& logits, const std::vector<int>& labels,
                   Tensor<T>& grad) {
  detail::check_class_inputs(logits, labels);
  require_shape(grad, logits.shape(), "class ce grad");
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = logits.data() + b * k;
    T* grow = grad.data() + b * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    for (int64_t j = 0; j < k; ++j) {
      double p = std::exp(static_cast<double>(row[j]) - mx) / sum;
      if (j == labels[static_cast<size_t>(b)]) p -= 1.0;
      grow[j] += static_cast<T>(p * inv_b);
    }
  }
}

// ---------------------------------------------------------------------------
// Plain GAN objectives. Values are negative mean log-likelihoods, so the
// trainer minimizes them directly.
// ---------------------------------------------------------------------------

template <typename T>
LossValue gan_d_loss(std::span<const T> source_logits_real,
                     std::span<const T> source_logits_fake) {
  detail::check_nonempty(source_logits_real, "gan_d_loss(real)");
  detail::check_nonempty(source_logits_fake, "gan_d_loss(fake)");
  LossValue out;
  out.components.emplace_back("source_real",
                              detail::mean_softplus_neg(source_logits_real));
  out.components.emplace_back("source_fake",
                              detail::mean_softplus_pos(source_logits_fake));
  for (const auto& [k, v] : out.components) out.value += v;
  return out;
}

/// d(gan_d_loss)/dlogits, added into the given buffers.
template <typename T>
void gan_d_loss_grad(std::span<const T> source_logits_real,
                     std::span<const T> source_logits_fake,
                     std::span<T> grad_real, std::span<T> grad_fake) {
  detail::check_nonempty(source_logits_real, "gan_d_loss_grad(real)");
  detail::check_nonempty(source_logits_fake, "gan_d_loss_grad(fake)");
  if (grad_real.size() != source_logits_real.size() ||
      grad_fake.size() != source_logits_fake.size())
    throw ContractError("gan_d_loss_grad: gradient buffer shape mismatch");
  const double inv_r = 1.0 / static_cast<double>(source_logits_real.size());
  const double inv_f = 1.0 / static_cast<double>(source_logits_fake.size());
  for (size_t i = 0; i < source_logits_real.size(); ++i)
    grad_real[i] += static_cast<T>(
        -sigmoid(-static_cast<double>(source_logits_real[i])) * inv_r);
  for (size_t i = 0; i < source_logits_fake.size(); ++i)
    grad_fake[i] += static_cast<T>(
        sigmoid(static_cast<double>(source_logits_fake[i])) * inv_f);
}

/// Non-saturating generator source term: -mean log sigmoid(l_fake).
template <typename T>
LossValue gan_g_loss(std::span<const T> source_logits_fake) {
  detail::check_nonempty(source_logits_fake, "gan_g_loss");
  LossValue out;
  out.components.emplace_back("source_fake",
                              detail::mean_softplus_neg(source_logits_fake));
  out.value = out.components[0].second;
  return out;
}

template <typename T>
void gan_g_loss_grad(std::span<const T> source_logits_fake, std::span<T> grad_fake) {
  detail::check_nonempty(source_logits_fake, "gan_g_loss_grad");
  if (grad_fake.size() != source_logits_fake.size())
    throw ContractError("gan_g_loss_grad: gradient buffer shape mismatch");
  const double inv = 1.0 / static_cast<double>(source_logits_fake.size());
  for (size_t i = 0; i < source_logits_fake.size(); ++i)
    grad_fake[i] += static_cast<T>(
        -sigmoid(-static_cast<double>(source_logits_fake[i])) * inv);
}

// ---------------------------------------------------------------------------
// Auxiliary-classifier objectives. The discriminator's default omits the
// fake-image class term; include_fake_class_term enables the classic
// variant for ablation.
// ---------------------------------------------------------------------------

template <typename T>
LossValue ac_d_loss(std::span<const T> source_logits_real,
                    std::span<const T> source_logits_fake,
                    const Tensor<T>& class_logits_real,
                    const std::vector<int>& true_labels_real,
                    const Tensor<T>& class_logits_fake,
                    const std::vector<int>& sampled_labels_fake,
                    bool include_fake_class_term = false) {
  LossValue out = gan_d_loss(source_logits_real, source_logits_fake);
  out.components.emplace_back("class_real",
                              class_ce(class_logits_real, true_labels_real));
  out.value += out.components.back().second;
  if (include_fake_class_term) {
    out.components.emplace_back("class_fake",
                                class_ce(class_logits_fake, sampled_labels_fake));
    out.value += out.components.back().second;
  } else {
    // Labels are still validated so a bad batch fails loudly either way.
    detail::check_class_inputs(class_logits_fake, sampled_labels_fake);
  }
  return out;
}

template <typename T>
void ac_d_loss_grad(std::span<const T> source_logits_real,
                    std::span<const T> source_logits_fake,
                    const Tensor<T>& class_logits_real,
                    const std::vector<int>& true_labels_real,
                    const Tensor<T>& class_logits_fake,
                    const std::vector<int>& sampled_labels_fake,
                    bool include_fake_class_term, std::span<T> grad_source_real,
                    std::span<T> grad_source_fake, Tensor<T>& grad_class_real,
                    Tensor<T>& grad_class_fake) {
  gan_d_loss_grad(source_logits_real, source_logits_fake, grad_source_real,
                  grad_source_fake);
  class_ce_grad(class_logits_real, true_labels_real, grad_class_real);
  if (include_fake_class_term)
    class_ce_grad(class_logits_fake, sampled_labels_fake, grad_class_fake);
}

template <typename T>
LossValue ac_g_loss(std::span<const T> source_logits_fake,
                    const Tensor<T>& class_logits_fake,
                    const std::vector<int>& sampled_labels_fake) {
  LossValue out = gan_g_loss(source_logits_fake);
  out.components.emplace_back("class_fake",
                              class_ce(class_logits_fake, sampled_labels_fake));
  out.value += out.components.back().second;
  return out;
}

template <typename T>
void ac_g_loss_grad(std::span<const T> source_logits_fake,
                    const Tensor<T>& class_logits_fake,
                    const std::vector<int>& sampled_labels_fake,
                    std::span<T> grad_source_fake, Tensor<T>& grad_class_fake) {
  gan_g_loss_grad(source_logits_fake, grad_source_fake);
  class_ce_grad(class_logits_fake, sampled_labels_fake, grad_class_fake);
}

// ---------------------------------------------------------------------------
// Encoder objective: MSE between the latent batch fed to the generator and
// the encoder's reconstruction, averaged over batch and components.
// ---------------------------------------------------------------------------

template <typename T>
LossValue encoder_loss(const Tensor<T>& z_true, const Tensor<T>& z_pred) {
  if (!z_true.same_shape(z_pred))
    throw ContractError("encoder_loss: latent batch shapes differ");
  if (z_true.numel() == 0) throw ContractError("encoder_loss: empty batch");
  double acc = 0.0;
  for (int64_t i = 0; i < z_true.numel(); ++i) {
    const double d = static_cast<double>(z_true[i]) - static_cast<double>(z_pred[i]);
    acc += d * d;
  }
  LossValue out;
  out.value = acc / static_cast<double>(z_true.numel());
  out.components.emplace_back("mse", out.value);
  return out;
}

template <typename T>
void encoder_loss_grad(const Tensor<T>& z_true, const Tensor<T>& z_pred,
                       Tensor<T>& grad_pred) {
  if (!z_true.same_shape(z_pred))
    throw ContractError("encoder_loss_grad: latent batch shapes differ");
  require_shape(grad_pred, z_pred.shape(), "encoder_loss_grad");
  const double scale = 2.0 / static_cast<double>(z_true.numel());
  for (int64_t i = 0; i < z_true.numel(); ++i)
    grad_pred[i] += static_cast<T>(
        scale * (static_cast<double>(z_pred[i]) - static_cast<double>(z_true[i])));
}

}  // namespace xlat::objectives
