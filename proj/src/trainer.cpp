#include "xlat/trainer.hpp"

#include "xlat/blas.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "xlat/augment.hpp"
#include "xlat/errors.hpp"
#include "xlat/losses.hpp"
#include "xlat/translate.hpp"

namespace fs = std::filesystem;

namespace xlat::train {

namespace obj = xlat::objectives;

double StepMetrics::value(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw ContractError("metric not present: " + name);
}

std::string StepMetrics::json_line() const {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["step"] = step;
  for (const auto& [k, v] : values) j[k] = v;
  j["wall_ms"] = wall_ms;
  return j.dump();
}

Tensor<float> sample_latent(int64_t n, int64_t z_dim, SeededRng& rng) {
  if (n <= 0 || z_dim <= 0)
    throw ContractError("sample_latent: n and z_dim must be positive");
  Tensor<float> z({n, z_dim});
  rng.fill_uniform(z, -1.0, 1.0);
  return z;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<int> sample_labels(int64_t n, int64_t k, SeededRng& rng) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(k));
  return labels;
}

std::span<const float> span_of(const Tensor<float>& t) {
  return {t.data(), static_cast<size_t>(t.numel())};
}

/// Gathers and augments one minibatch; each sample consumes a fixed number
/// of draws so the stream is resumable.
void assemble_batch(const data::LabeledDataset& ds, const std::vector<int64_t>& order,
                    int64_t first, int64_t batch_size, const AugmentSettings& aug,
                    SeededRng& rng, Tensor<float>& images, std::vector<int>& labels) {
  const int64_t plane = ds.channels * ds.image_size * ds.image_size;
  for (int64_t i = 0; i < batch_size; ++i) {
    const int64_t idx = order[static_cast<size_t>(first + i)];
    Tensor<float> img = data::augment(ds.images[static_cast<size_t>(idx)], rng, aug);
    std::copy(img.data(), img.data() + plane, images.data() + i * plane);
    labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(idx)];
  }
}

struct MetricsSink {
  std::ofstream file;
  const TrainIO* io = nullptr;

  explicit MetricsSink(const TrainIO& io_ref) : io(&io_ref) {
    if (!io->run_dir.empty()) {
      fs::create_directories(io->run_dir);
      file.open(fs::path(io->run_dir) / "metrics.jsonl", std::ios::app);
      if (!file) throw IoError("cannot open metrics.jsonl under " + io->run_dir);
    }
  }

  void emit(const StepMetrics& m) {
    if (file.is_open()) file << m.json_line() << "\n";
    if (io->on_metrics) io->on_metrics(m);
  }

  void flush() {
    if (file.is_open()) file.flush();
  }
};

std::string grid_path(const std::string& run_dir, const char* phase, int64_t step) {
  fs::create_directories(fs::path(run_dir) / "samples");
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%06lld.png", phase, static_cast<long long>(step));
  return (fs::path(run_dir) / "samples" / name).string();
}

Checkpoint build_step1_checkpoint(const RunConfig& cfg, model::Generator& g,
                                  model::Discriminator& d, AdamStateT<float>& opt_g,
                                  AdamStateT<float>& opt_d, int64_t epochs_done,
                                  int64_t iters, uint64_t draws) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.has_g = ckpt.has_d = true;
  ckpt.step1_epochs_done = epochs_done;
  ckpt.step1_iters = iters;
  ckpt.step1_rng_draws = draws;
  ckpt.adam_g_t = opt_g.t;
  ckpt.adam_d_t = opt_d.t;
  ckpt.add_params(g.params());
  ckpt.add_buffers(g.buffers());
  ckpt.add_params(d.params());
  ckpt.add_buffers(d.buffers());
  ckpt.add_adam("adamG", g.params(), opt_g);
  ckpt.add_adam("adamD", d.params(), opt_d);
  return ckpt;
}

}  // namespace

objectives::LossValue discriminator_update(const Tensor<float>& real_images,
                                           const std::vector<int>& real_labels,
                                           model::Generator& g,
                                           model::Discriminator& d,
                                           AdamStateT<float>& opt_d,
                                           const RunConfig& cfg, SeededRng& rng,
                                           DiscAccuracy* accuracy) {
  const int64_t batch = real_images.dim(0);
  const AdamHyper hp{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  Tensor<float> z = sample_latent(batch, cfg.z_dim, rng);
  std::vector<int> fake_labels = sample_labels(batch, cfg.k, rng);
  Tensor<float> fakes = g.forward(z, fake_labels);

  d.zero_grad();
  // Real pass: backward must run while this pass's caches are live.
  model::DiscOutput out_r = d.forward(real_images);
  {
    Tensor<float> g_src(out_r.source_logits.shape());
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (int64_t i = 0; i < batch; ++i)
      g_src[i] = static_cast<float>(
          -obj::sigmoid(-static_cast<double>(out_r.source_logits[i])) * inv_b);
    Tensor<float> g_cls(out_r.class_logits.shape());
    obj::class_ce_grad(out_r.class_logits, real_labels, g_cls);
    d.backward(g_src, g_cls, false, true);
  }
  // Fake pass.
  model::DiscOutput out_f = d.forward(fakes);
  {
    Tensor<float> g_src(out_f.source_logits.shape());
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (int64_t i = 0; i < batch; ++i)
      g_src[i] = static_cast<float>(
          obj::sigmoid(static_cast<double>(out_f.source_logits[i])) * inv_b);
    Tensor<float> g_cls(out_f.class_logits.shape());
    if (cfg.ac_on_fake_for_d) obj::class_ce_grad(out_f.class_logits, fake_labels, g_cls);
    d.backward(g_src, g_cls, false, true);
  }

  obj::LossValue loss_d =
      obj::ac_d_loss(span_of(out_r.source_logits), span_of(out_f.source_logits),
                     out_r.class_logits, real_labels, out_f.class_logits,
                     fake_labels, cfg.ac_on_fake_for_d);
  if (!std::isfinite(loss_d.value))
    throw NumericError("non-finite discriminator loss");

  if (accuracy) {
    int64_t right_real = 0, right_fake = 0, right_class = 0;
    for (int64_t i = 0; i < batch; ++i) {
      right_real += out_r.source_logits[i] > 0.0f;
      right_fake += out_f.source_logits[i] < 0.0f;
      int64_t arg = 0;
      for (int64_t j = 1; j < cfg.k; ++j)
        if (out_r.class_logits.at2(i, j) > out_r.class_logits.at2(i, arg)) arg = j;
      right_class += arg == real_labels[static_cast<size_t>(i)];
    }
    accuracy->real = static_cast<double>(right_real) / static_cast<double>(batch);
    accuracy->fake = static_cast<double>(right_fake) / static_cast<double>(batch);
    accuracy->cls = static_cast<double>(right_class) / static_cast<double>(batch);
  }

  adam_step(d.params(), opt_d, hp);
  return loss_d;
}

objectives::LossValue generator_update(model::Generator& g, model::Discriminator& d,
                                       AdamStateT<float>& opt_g, const RunConfig& cfg,
                                       SeededRng& rng) {
  const AdamHyper hp{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  Tensor<float> z = sample_latent(cfg.batch_size, cfg.z_dim, rng);
  std::vector<int> fake_labels = sample_labels(cfg.batch_size, cfg.k, rng);
  g.zero_grad();
  Tensor<float> fakes = g.forward(z, fake_labels);
  model::DiscOutput out = d.forward(fakes);

  obj::LossValue loss_g =
      obj::ac_g_loss(span_of(out.source_logits), out.class_logits, fake_labels);
  if (!std::isfinite(loss_g.value)) throw NumericError("non-finite generator loss");

  Tensor<float> g_src(out.source_logits.shape());
  Tensor<float> g_cls(out.class_logits.shape());
  obj::ac_g_loss_grad(span_of(out.source_logits), out.class_logits, fake_labels,
                      {g_src.data(), static_cast<size_t>(g_src.numel())}, g_cls);
  Tensor<float> dx = d.backward(g_src, g_cls, /*need_input_grad=*/true,
                                /*accumulate_param_grads=*/false);
  g.backward(dx);
  adam_step(g.params(), opt_g, hp);
  return loss_g;
}

StepMetrics train_step1_iteration(const Tensor<float>& real_images,
                                  const std::vector<int>& real_labels,
                                  model::Generator& g, model::Discriminator& d,
                                  AdamStateT<float>& opt_g, AdamStateT<float>& opt_d,
                                  const RunConfig& cfg, SeededRng& rng,
                                  int64_t step_index) {
  const auto t0 = Clock::now();
  if (real_images.dim(0) != cfg.batch_size)
    throw ContractError("train_step1_iteration: real batch size must equal batch_size");

  obj::LossValue loss_d;
  DiscAccuracy acc;
  obj::LossValue loss_g;
  try {
    for (int64_t ds = 0; ds < cfg.d_steps_per_g_step; ++ds)
      loss_d = discriminator_update(real_images, real_labels, g, d, opt_d, cfg, rng, &acc);
    loss_g = generator_update(g, d, opt_g, cfg, rng);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step_index) + ": " + e.what());
  }

  StepMetrics m;
  m.phase = "step1";
  m.step = step_index;
  m.values.emplace_back("loss_d", loss_d.value);
  for (const auto& [k, v] : loss_d.components) m.values.emplace_back("loss_d_" + k, v);
  m.values.emplace_back("loss_g", loss_g.value);
  for (const auto& [k, v] : loss_g.components) m.values.emplace_back("loss_g_" + k, v);
  m.values.emplace_back("acc_real", acc.real);
  m.values.emplace_back("acc_fake", acc.fake);
  m.values.emplace_back("acc_class", acc.cls);
  m.wall_ms = ms_since(t0);
  return m;
}

StepMetrics train_step2_iteration(GeneratorFn& g_frozen, model::Encoder& e,
                                  AdamStateT<float>& opt_e, const RunConfig& cfg,
                                  SeededRng& rng, int64_t step_index) {
  const auto t0 = Clock::now();
  const AdamHyper hp{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  Tensor<float> z = sample_latent(cfg.batch_size, cfg.z_dim, rng);
  std::vector<int> labels = sample_labels(cfg.batch_size, cfg.k, rng);
  Tensor<float> images = g_frozen.generate(z, labels);

  e.zero_grad();
  Tensor<float> z_pred = e.forward(images);
  obj::LossValue loss = obj::encoder_loss(z, z_pred);
  if (!std::isfinite(loss.value))
    throw NumericError("step " + std::to_string(step_index) + ": non-finite encoder loss");

  Tensor<float> g_z(z_pred.shape());
  obj::encoder_loss_grad(z, z_pred, g_z);
  e.backward(g_z);
  adam_step(e.params(), opt_e, hp);

  StepMetrics m;
  m.phase = "step2";
  m.step = step_index;
  m.values.emplace_back("loss_mse", loss.value);
  m.wall_ms = ms_since(t0);
  return m;
}

Checkpoint run_step1(const data::LabeledDataset& ds, const RunConfig& cfg,
                     const TrainIO& io, const std::optional<Checkpoint>& resume) {
  tune_runtime();
  cfg.validate();
  if (ds.size() == 0) throw ConfigError("run_step1: dataset is empty");
  if (ds.k != cfg.k)
    throw ConfigError("run_step1: dataset has K=" + std::to_string(ds.k) +
                      " but config expects K=" + std::to_string(cfg.k));
  if (ds.image_size != cfg.image_size || ds.channels != cfg.channels)
    throw ConfigError("run_step1: dataset geometry does not match the config");
  {
    const auto counts = ds.per_domain_counts();
    for (int64_t dom = 0; dom < ds.k; ++dom)
      if (counts[static_cast<size_t>(dom)] == 0)
        throw ConfigError("run_step1: dataset is missing domain " + std::to_string(dom));
  }

  SeededRng root(cfg.seed);
  SeededRng init_g = root.derive("init_g");
  SeededRng init_d = root.derive("init_d");
  model::Generator g(cfg, init_g);
  model::Discriminator d(cfg, init_d);
  AdamStateT<float> opt_g = AdamStateT<float>::init_like(g.params());
  AdamStateT<float> opt_d = AdamStateT<float>::init_like(d.params());
  SeededRng rng = root.derive("step1");

  int64_t start_epoch = 0, iters = 0;
  if (resume) {
    if (!resume->config.structure_matches(cfg))
      throw ConfigError("run_step1: checkpoint config is incompatible (" +
                        resume->config.structure_diff(cfg) + ")");
    if (!resume->has_g || !resume->has_d)
      throw DataError("run_step1: resume checkpoint lacks G or D");
    resume->restore_params(g.params());
    resume->restore_buffers(g.buffers());
    resume->restore_params(d.params());
    resume->restore_buffers(d.buffers());
    opt_g = resume->restore_adam("adamG", g.params());
    opt_d = resume->restore_adam("adamD", d.params());
    opt_g.t = resume->adam_g_t;
    opt_d.t = resume->adam_d_t;
    start_epoch = resume->step1_epochs_done;
    iters = resume->step1_iters;
    rng = SeededRng::resumed(rng.seed(), resume->step1_rng_draws);
  }

  SeededRng grid_rng = root.derive("grid");
  const int64_t grid_n = 64;
  Tensor<float> grid_z = sample_latent(grid_n, cfg.z_dim, grid_rng);
  std::vector<int> grid_labels(static_cast<size_t>(grid_n));
  for (int64_t i = 0; i < grid_n; ++i)
    grid_labels[static_cast<size_t>(i)] = static_cast<int>(i % cfg.k);

  MetricsSink sink(io);
  if (!io.run_dir.empty()) {
    std::ofstream cfg_out(fs::path(io.run_dir) / "config.json");
    cfg_out << cfg.to_json().dump(2) << "\n";
  }

  g.set_training(true);
  d.set_training(true);

  const int64_t iters_per_epoch = ds.size() / cfg.batch_size;
  if (iters_per_epoch == 0 && cfg.step1_epochs > 0)
    throw ConfigError("run_step1: dataset smaller than one batch");

  Tensor<float> batch_images({cfg.batch_size, cfg.channels, cfg.image_size, cfg.image_size});
  std::vector<int> batch_labels(static_cast<size_t>(cfg.batch_size));
  std::vector<int64_t> order(static_cast<size_t>(ds.size()));

  for (int64_t epoch = start_epoch; epoch < cfg.step1_epochs; ++epoch) {
    for (int64_t i = 0; i < ds.size(); ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    for (int64_t b = 0; b < iters_per_epoch; ++b) {
      assemble_batch(ds, order, b * cfg.batch_size, cfg.batch_size, cfg.aug, rng,
                     batch_images, batch_labels);
      StepMetrics m = train_step1_iteration(batch_images, batch_labels, g, d, opt_g,
                                            opt_d, cfg, rng, iters);
      ++iters;
      sink.emit(m);
      if (!io.run_dir.empty() && iters % cfg.grid_every == 0) {
        g.set_training(false);
        Tensor<float> imgs = g.forward(grid_z, grid_labels);
        g.set_training(true);
        std::vector<Tensor<float>> tiles;
        for (int64_t i = 0; i < grid_n; ++i) {
          Tensor<float> tile({cfg.channels, cfg.image_size, cfg.image_size});
          std::copy(imgs.data() + i * tile.numel(), imgs.data() + (i + 1) * tile.numel(),
                    tile.data());
          tiles.push_back(std::move(tile));
        }
        infer::write_sample_grid(tiles, 8, grid_path(io.run_dir, "step1", iters));
      }
    }
    if (!io.run_dir.empty()) {
      Checkpoint ckpt = build_step1_checkpoint(cfg, g, d, opt_g, opt_d, epoch + 1,
                                               iters, rng.draws());
      save_checkpoint(ckpt, (fs::path(io.run_dir) / "checkpoints" / "step1-latest").string());
      sink.flush();
    }
  }

  Checkpoint final_ckpt = build_step1_checkpoint(cfg, g, d, opt_g, opt_d,
                                                 cfg.step1_epochs, iters, rng.draws());
  if (!io.run_dir.empty())
    save_checkpoint(final_ckpt, (fs::path(io.run_dir) / "checkpoints" / "step1").string());
  return final_ckpt;
}

Checkpoint run_step2(const Checkpoint& from_step1, const RunConfig& cfg,
                     const TrainIO& io, const std::optional<Checkpoint>& resume) {
  tune_runtime();
  cfg.validate();
  if (!from_step1.has_g)
    throw DataError("run_step2: checkpoint does not contain a trained generator");
  if (!from_step1.config.structure_matches(cfg))
    throw ConfigError("run_step2: checkpoint config is incompatible (" +
                      from_step1.config.structure_diff(cfg) + ")");

  SeededRng root(cfg.seed);
  SeededRng scratch = root.derive("init_g");
  model::Generator g(cfg, scratch);
  from_step1.restore_params(g.params());
  from_step1.restore_buffers(g.buffers());

  SeededRng init_e = root.derive("init_e");
  model::Encoder e(cfg, init_e);
  AdamStateT<float> opt_e = AdamStateT<float>::init_like(e.params());
  SeededRng rng = root.derive("step2");
  int64_t iters = 0;

  if (resume) {
    if (!resume->has_e) throw DataError("run_step2: resume checkpoint lacks E");
    if (!resume->config.structure_matches(cfg))
      throw ConfigError("run_step2: resume checkpoint config is incompatible");
    resume->restore_params(e.params());
    resume->restore_buffers(e.buffers());
    opt_e = resume->restore_adam("adamE", e.params());
    opt_e.t = resume->adam_e_t;
    iters = resume->step2_iters;
    rng = SeededRng::resumed(rng.seed(), resume->step2_rng_draws);
  }

  FrozenGenerator g_frozen(g);
  e.set_training(true);

  SeededRng grid_rng = root.derive("grid2");
  const int64_t grid_n = 16;
  Tensor<float> grid_z = sample_latent(grid_n, cfg.z_dim, grid_rng);
  std::vector<int> grid_labels(static_cast<size_t>(grid_n));
  for (int64_t i = 0; i < grid_n; ++i)
    grid_labels[static_cast<size_t>(i)] = static_cast<int>(i % cfg.k);

  MetricsSink sink(io);

  auto build_ckpt = [&](int64_t done_iters) {
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.has_g = from_step1.has_g;
    ckpt.has_d = from_step1.has_d;
    ckpt.has_e = true;
    ckpt.step1_epochs_done = from_step1.step1_epochs_done;
    ckpt.step1_iters = from_step1.step1_iters;
    ckpt.step1_rng_draws = from_step1.step1_rng_draws;
    ckpt.adam_g_t = from_step1.adam_g_t;
    ckpt.adam_d_t = from_step1.adam_d_t;
    ckpt.step2_iters = done_iters;
    ckpt.step2_rng_draws = rng.draws();
    ckpt.adam_e_t = opt_e.t;
    ckpt.tensors = from_step1.tensors;  // G, D and their optimizer moments
    ckpt.add_params(e.params());
    ckpt.add_buffers(e.buffers());
    ckpt.add_adam("adamE", e.params(), opt_e);
    return ckpt;
  };

  for (int64_t t = iters; t < cfg.step2_steps; ++t) {
    StepMetrics m = train_step2_iteration(g_frozen, e, opt_e, cfg, rng, t);
    sink.emit(m);
    const int64_t done = t + 1;
    if (!io.run_dir.empty() && done % cfg.grid_every == 0) {
      e.set_training(false);
      Tensor<float> x = g.forward(grid_z, grid_labels);
      Tensor<float> x_rec = g.forward(e.forward(x), grid_labels);
      e.set_training(true);
      std::vector<Tensor<float>> ins, outs;
      for (int64_t i = 0; i < grid_n; ++i) {
        Tensor<float> a({cfg.channels, cfg.image_size, cfg.image_size});
        Tensor<float> b(a.shape());
        std::copy(x.data() + i * a.numel(), x.data() + (i + 1) * a.numel(), a.data());
        std::copy(x_rec.data() + i * b.numel(), x_rec.data() + (i + 1) * b.numel(), b.data());
        ins.push_back(std::move(a));
        outs.push_back(std::move(b));
      }
      infer::write_sample_grid(infer::interleave_pairs(ins, outs), 8,
                               grid_path(io.run_dir, "step2", done));
    }
    if (!io.run_dir.empty() && done % cfg.step2_checkpoint_every == 0) {
      save_checkpoint(build_ckpt(done),
                      (fs::path(io.run_dir) / "checkpoints" / "step2-latest").string());
      sink.flush();
    }
  }

  Checkpoint final_ckpt = build_ckpt(cfg.step2_steps);
  if (!io.run_dir.empty())
    save_checkpoint(final_ckpt, (fs::path(io.run_dir) / "checkpoints" / "step2").string());
  return final_ckpt;
}

model::Models rebuild_models(const Checkpoint& ckpt, bool need_e) {
  ckpt.config.validate();
  SeededRng scratch(0);
  model::Models m;
  if (ckpt.has_g) {
    m.g = std::make_unique<model::Generator>(ckpt.config, scratch);
    ckpt.restore_params(m.g->params());
    ckpt.restore_buffers(m.g->buffers());
    m.g->set_training(false);
  }
  if (ckpt.has_d) {
    m.d = std::make_unique<model::Discriminator>(ckpt.config, scratch);
    ckpt.restore_params(m.d->params());
    ckpt.restore_buffers(m.d->buffers());
    m.d->set_training(false);
  }
  if (ckpt.has_e) {
    m.e = std::make_unique<model::Encoder>(ckpt.config, scratch);
    ckpt.restore_params(m.e->params());
    ckpt.restore_buffers(m.e->buffers());
    m.e->set_training(false);
  } else if (need_e) {
    throw DataError("checkpoint does not contain an encoder; run step 2 first");
  }
  return m;
}

}  // namespace xlat::train
