#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xlat/adam.hpp"
#include "xlat/checkpoint.hpp"
#include "xlat/config.hpp"
#include "xlat/dataset.hpp"
#include "xlat/losses.hpp"
#include "xlat/networks.hpp"
#include "xlat/rng.hpp"

namespace xlat::train {

struct StepMetrics {
  std::string phase;  // "step1" | "step2"
  int64_t step = 0;
  std::vector<std::pair<std::string, double>> values;
  double wall_ms = 0.0;

  double value(const std::string& name) const;
  std::string json_line() const;
};

/// Emission sinks for a run. With an empty run_dir nothing is written;
/// on_metrics (when set) sees every iteration either way.
struct TrainIO {
  std::string run_dir;
  std::function<void(const StepMetrics&)> on_metrics;
};

/// n i.i.d. latent vectors, components uniform on [-1, 1].
Tensor<float> sample_latent(int64_t n, int64_t z_dim, SeededRng& rng);

struct DiscAccuracy {
  double real = 0, fake = 0, cls = 0;
};

/// One discriminator update: draws fresh z and uniform fake labels, builds
/// fakes through the generator, applies the auxiliary-classifier loss and
/// takes an Adam step on D only.
objectives::LossValue discriminator_update(const Tensor<float>& real_images,
                                           const std::vector<int>& real_labels,
                                           model::Generator& g,
                                           model::Discriminator& d,
                                           AdamStateT<float>& opt_d,
                                           const RunConfig& cfg, SeededRng& rng,
                                           DiscAccuracy* accuracy = nullptr);

/// One generator update on fresh noise; D propagates gradients but its
/// parameters do not move.
objectives::LossValue generator_update(model::Generator& g, model::Discriminator& d,
                                       AdamStateT<float>& opt_g, const RunConfig& cfg,
                                       SeededRng& rng);

/// One adversarial iteration: d_steps_per_g_step discriminator updates
/// (fresh z and uniform fake labels each), then one generator update.
/// Aborts with NumericError naming the step on a non-finite loss.
StepMetrics train_step1_iteration(const Tensor<float>& real_images,
                                  const std::vector<int>& real_labels,
                                  model::Generator& g, model::Discriminator& d,
                                  AdamStateT<float>& opt_g, AdamStateT<float>& opt_d,
                                  const RunConfig& cfg, SeededRng& rng,
                                  int64_t step_index);

/// Frozen image source for step 2; the production case wraps the trained
/// generator in inference mode, tests may substitute a known inverse.
struct GeneratorFn {
  virtual ~GeneratorFn() = default;
  virtual Tensor<float> generate(const Tensor<float>& z, const std::vector<int>& labels) = 0;
};

struct FrozenGenerator final : GeneratorFn {
  model::Generator& g;
  explicit FrozenGenerator(model::Generator& gen) : g(gen) { g.set_training(false); }
  Tensor<float> generate(const Tensor<float>& z, const std::vector<int>& labels) override {
    return g.forward(z, labels);
  }
};

/// One encoder iteration against a frozen generator: z and uniform labels
/// are drawn fresh, the loss is the latent-space MSE, and only E updates.
StepMetrics train_step2_iteration(GeneratorFn& g_frozen, model::Encoder& e,
                                  AdamStateT<float>& opt_e, const RunConfig& cfg,
                                  SeededRng& rng, int64_t step_index);

/// Step 1: adversarial training of (G, D) over the dataset with per-sample
/// augmentation. Emits metrics each iteration, sample grids every
/// cfg.grid_every iterations, and a resumable checkpoint every epoch.
Checkpoint run_step1(const data::LabeledDataset& dataset, const RunConfig& cfg,
                     const TrainIO& io = {},
                     const std::optional<Checkpoint>& resume = std::nullopt);

/// Step 2: encoder training against the frozen generator from step 1.
/// Fresh z each iteration; checkpoints every cfg.step2_checkpoint_every.
Checkpoint run_step2(const Checkpoint& from_step1, const RunConfig& cfg,
                     const TrainIO& io = {},
                     const std::optional<Checkpoint>& resume = std::nullopt);

// Checkpoint <-> live network plumbing shared with the CLI and evaluation.
model::Models rebuild_models(const Checkpoint& ckpt, bool need_e);

}  // namespace xlat::train
