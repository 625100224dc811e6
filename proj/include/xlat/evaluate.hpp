#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlat/checkpoint.hpp"
#include "xlat/dataset.hpp"
#include "xlat/networks.hpp"
#include "xlat/rng.hpp"

namespace xlat::eval {

/// Anything that assigns a domain label to a batch of images. The trained
/// classifier implements this; tests may substitute stubs.
struct Judge {
  virtual ~Judge() = default;
  virtual std::vector<int> classify(const Tensor<float>& images) = 0;
};

struct ClassifierConfig {
  int64_t image_size = 32, channels = 3, k = 2;
  int64_t base_channels = 16;
  int64_t batch_size = 64;
  double lr = 1e-3;
  int64_t max_steps = 3000;
  double target_holdout_accuracy = 0.99;
  double holdout_fraction = 0.1;
  uint64_t seed = 1234;
};

/// Small convolutional net, independent of the GAN discriminator: it shares
/// no parameters with D and never reads GAN checkpoints.
class DomainClassifier final : public Judge {
 public:
  DomainClassifier(const ClassifierConfig& cfg, SeededRng& rng);

  Tensor<float> forward(const Tensor<float>& images);  // logits (B, K)
  void backward(const Tensor<float>& grad_logits);
  std::vector<int> classify(const Tensor<float>& images) override;

  void set_training(bool training);
  void zero_grad();
  std::vector<nn::ParamRef<float>> params();
  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  model::ConvTrunk trunk_;
  nn::DenseT<float> head_;
};

struct TrainedClassifier {
  std::unique_ptr<DomainClassifier> net;
  double holdout_accuracy = 0.0;
  bool accuracy_warning = false;  // budget exhausted below the target
  int64_t steps_used = 0;
};

/// Trains until the held-out accuracy target is met or the step budget runs
/// out; in the latter case the warning flag is set and evaluation proceeds.
TrainedClassifier train_domain_classifier(const data::LabeledDataset& dataset,
                                          const ClassifierConfig& cfg);

/// Fraction of translate(x, target) that the judge assigns to `target`.
double domain_flip_rate(model::Encoder& e, model::Generator& g, Judge& judge,
                        const std::vector<Tensor<float>>& test_images, int target);

/// Mean squared componentwise error of E(G(z, c)) against z, averaged over
/// n_samples draws with uniform labels; "per dimension" means the mean over
/// latent components.
double latent_roundtrip_mse(
    const std::function<Tensor<float>(const Tensor<float>&, const std::vector<int>&)>& gen,
    const std::function<Tensor<float>(const Tensor<float>&)>& enc, int64_t n_samples,
    int64_t z_dim, int64_t k, int64_t batch, SeededRng& rng);
double latent_roundtrip_mse(model::Generator& g, model::Encoder& e,
                            int64_t n_samples, SeededRng& rng);

/// Intensity-weighted centroid of |pixel - median background| mass, in pixel
/// coordinates. Returns nullopt for images without foreground mass.
std::optional<std::pair<double, double>> foreground_centroid(const Tensor<float>& x);

/// Effective shape size in pixels from foreground mass: radius for circles
/// (domain 0), half-side for squares (domain 1).
std::optional<double> foreground_size(const Tensor<float>& x, int domain);

struct EvalConfig {
  uint64_t seed = 1;
  int64_t n_generated = 2048;     // samples for class accuracy
  int64_t n_roundtrip = 4096;     // samples for latent round-trip MSE
  double classifier_train_fraction = 0.8;  // remainder judges translations
  ClassifierConfig classifier;
};

struct EvalReport {
  double generated_sample_class_accuracy = 0.0;
  std::map<std::string, double> translation_domain_flip_rate;  // "a->b" -> rate
  double latent_roundtrip_mse = 0.0;
  double centroid_error_mean_px = 0.0;
  double centroid_error_p95_px = 0.0;
  int64_t centroid_undefined_count = 0;
  double size_error_px = 0.0;
  double cycle_l1 = 0.0;
  double classifier_holdout_accuracy = 0.0;
  bool classifier_warning = false;
  std::vector<std::string> omitted;  // metrics unavailable without E
  nlohmann::ordered_json config_snapshot;
  nlohmann::ordered_json dataset_provenance;

  nlohmann::ordered_json to_json() const;
  void write(const std::string& path) const;
};

/// Full quantitative evaluation of a checkpoint against a labeled dataset.
/// The dataset is split deterministically: most of it trains the judge, the
/// held-back slice provides translation inputs. Missing E produces a partial
/// report with the omission list filled in.
EvalReport evaluate_run(const train::Checkpoint& ckpt,
                        const data::LabeledDataset& dataset, const EvalConfig& cfg);

}  // namespace xlat::eval
