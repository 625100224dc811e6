#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "xlat/shapes.hpp"
#include "xlat/trainer.hpp"

using namespace xlat;
using namespace xlat::train;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg;
  cfg.image_size = 32;
  cfg.k = 2;
  cfg.z_dim = 8;
  cfg.base_channels = 4;
  cfg.batch_size = 8;
  cfg.embed_dim = 3;
  cfg.step1_epochs = 2;
  cfg.step2_steps = 4;
  cfg.grid_every = 1000000;
  cfg.seed = 7;
  return cfg;
}

data::LabeledDataset tiny_dataset(uint64_t seed = 3, int64_t n_per_domain = 16) {
  data::ShapesSpec spec;
  spec.n_per_domain = n_per_domain;
  spec.seed = seed;
  return data::build_shapes_dataset(spec);
}

std::vector<Tensor<float>> snapshot(std::vector<nn::ParamRef<float>> params) {
  std::vector<Tensor<float>> out;
  for (auto& p : params) out.push_back(*p.value);
  return out;
}

bool identical(const std::vector<Tensor<float>>& snap,
               std::vector<nn::ParamRef<float>> params) {
  for (size_t i = 0; i < params.size(); ++i)
    if (!(snap[i] == *params[i].value)) return false;
  return true;
}

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("xlat_trainer_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

constexpr double kLn2 = 0.6931471805599453;

}  // namespace

TEST_CASE("sample_latent: shape, range, determinism and U(-1,1) moments") {
  SeededRng r1(11), r2(11);
  Tensor<float> a = sample_latent(64, 100, r1);
  Tensor<float> b = sample_latent(64, 100, r2);
  CHECK(a.shape() == std::vector<int64_t>{64, 100});
  CHECK(a == b);
  for (int64_t i = 0; i < a.numel(); ++i) {
    CHECK(a[i] >= -1.0f);
    CHECK(a[i] <= 1.0f);
  }

  SeededRng r3(12);
  Tensor<float> big = sample_latent(1000, 100, r3);  // 1e5 draws
  double mean = 0;
  for (int64_t i = 0; i < big.numel(); ++i) mean += big[i];
  mean /= static_cast<double>(big.numel());
  double var = 0;
  for (int64_t i = 0; i < big.numel(); ++i) {
    const double d = big[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(big.numel());
  CHECK(std::fabs(mean) < 0.01);
  CHECK(std::fabs(var - 1.0 / 3.0) < 0.01);

  CHECK_THROWS_AS((void)sample_latent(0, 4, r3), ContractError);
}

TEST_CASE("zero-initialized heads: first discriminator loss is 3 ln 2") {
  RunConfig cfg = tiny_cfg();
  SeededRng init(cfg.seed);
  model::Models m = model::init_params(cfg, init);
  for (auto& p : m.d->params())
    if (p.name.rfind("D.head", 0) == 0) p.value->zero();

  auto ds = tiny_dataset();
  Tensor<float> batch({cfg.batch_size, 3, 32, 32});
  std::vector<int> labels(static_cast<size_t>(cfg.batch_size));
  for (int64_t i = 0; i < cfg.batch_size; ++i) {
    const auto& img = ds.images[static_cast<size_t>(i)];
    std::copy(img.data(), img.data() + img.numel(), batch.data() + i * img.numel());
    labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(i)];
  }

  auto opt_d = AdamStateT<float>::init_like(m.d->params());
  SeededRng rng(1);
  auto loss = discriminator_update(batch, labels, *m.g, *m.d, opt_d, cfg, rng);
  CHECK(loss.value == doctest::Approx(3 * kLn2).epsilon(1e-6));

  // and the generator loss identity at zero heads: 2 ln 2
  for (auto& p : m.d->params())
    if (p.name.rfind("D.head", 0) == 0) p.value->zero();
  auto opt_g = AdamStateT<float>::init_like(m.g->params());
  auto loss_g = generator_update(*m.g, *m.d, opt_g, cfg, rng);
  CHECK(loss_g.value == doctest::Approx(2 * kLn2).epsilon(1e-6));
}

TEST_CASE("optimizer partitioning: D update leaves G fixed and vice versa") {
  RunConfig cfg = tiny_cfg();
  SeededRng init(cfg.seed);
  model::Models m = model::init_params(cfg, init);
  auto opt_g = AdamStateT<float>::init_like(m.g->params());
  auto opt_d = AdamStateT<float>::init_like(m.d->params());
  auto ds = tiny_dataset();

  Tensor<float> batch({cfg.batch_size, 3, 32, 32});
  std::vector<int> labels(static_cast<size_t>(cfg.batch_size));
  for (int64_t i = 0; i < cfg.batch_size; ++i) {
    const auto& img = ds.images[static_cast<size_t>(i)];
    std::copy(img.data(), img.data() + img.numel(), batch.data() + i * img.numel());
    labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(i)];
  }

  SeededRng rng(2);
  auto g_snap = snapshot(m.g->params());
  auto e_snap = snapshot(m.e->params());
  auto d_before = snapshot(m.d->params());
  (void)discriminator_update(batch, labels, *m.g, *m.d, opt_d, cfg, rng);
  CHECK(identical(g_snap, m.g->params()));      // G untouched by the D step
  CHECK(identical(e_snap, m.e->params()));      // E untouched by step 1 entirely
  CHECK(!identical(d_before, m.d->params()));   // D moved

  auto d_snap = snapshot(m.d->params());
  (void)generator_update(*m.g, *m.d, opt_g, cfg, rng);
  CHECK(identical(d_snap, m.d->params()));      // D untouched by the G step
  CHECK(!identical(g_snap, m.g->params()));     // G moved
  CHECK(identical(e_snap, m.e->params()));
}

TEST_CASE("run_step1 metric trace is deterministic across runs") {
  RunConfig cfg = tiny_cfg();
  auto ds = tiny_dataset();
  std::vector<double> trace1, trace2;
  TrainIO io1, io2;
  io1.on_metrics = [&](const StepMetrics& m) {
    trace1.push_back(m.value("loss_d"));
    trace1.push_back(m.value("loss_g"));
  };
  io2.on_metrics = [&](const StepMetrics& m) {
    trace2.push_back(m.value("loss_d"));
    trace2.push_back(m.value("loss_g"));
  };
  Checkpoint c1 = run_step1(ds, cfg, io1);
  Checkpoint c2 = run_step1(ds, cfg, io2);
  REQUIRE(trace1.size() == trace2.size());
  REQUIRE(!trace1.empty());
  for (size_t i = 0; i < trace1.size(); ++i) CHECK(trace1[i] == trace2[i]);
  CHECK(c1.step1_iters == 2 * (ds.size() / cfg.batch_size));
  for (size_t i = 0; i < c1.tensors.size(); ++i)
    CHECK(c1.tensors[i].value == c2.tensors[i].value);
}

TEST_CASE("run_step1 degenerate epoch count returns an initialized checkpoint") {
  RunConfig cfg = tiny_cfg();
  cfg.step1_epochs = 0;
  auto ds = tiny_dataset();
  Checkpoint ckpt = run_step1(ds, cfg);
  CHECK(ckpt.step1_iters == 0);
  CHECK(ckpt.has_g);
  CHECK(ckpt.has_d);
  CHECK(!ckpt.has_e);

  // initialized parameters match a fresh init with the same seed
  SeededRng init(SeededRng(cfg.seed).derive("init_g").seed());
  model::Generator g(cfg, init);
  for (auto& p : g.params()) CHECK(ckpt.require(p.name) == *p.value);
}

TEST_CASE("run_step1 validates the dataset against the config") {
  RunConfig cfg = tiny_cfg();
  data::LabeledDataset empty;
  empty.k = 2;
  empty.image_size = 32;
  empty.channels = 3;
  CHECK_THROWS_AS((void)run_step1(empty, cfg), ConfigError);

  auto ds = tiny_dataset();
  ds.labels.assign(ds.labels.size(), 0);  // domain 1 now missing
  CHECK_THROWS_WITH_AS((void)run_step1(ds, cfg),
                       doctest::Contains("missing domain 1"), ConfigError);

  auto ds2 = tiny_dataset();
  RunConfig cfg3 = tiny_cfg();
  cfg3.k = 3;
  CHECK_THROWS_AS((void)run_step1(ds2, cfg3), ConfigError);
}

TEST_CASE("resumed step-1 training reproduces the uninterrupted trace") {
  auto ds = tiny_dataset();
  const fs::path dir = temp_dir("resume");

  RunConfig full_cfg = tiny_cfg();
  full_cfg.step1_epochs = 3;
  std::vector<double> full_trace;
  TrainIO full_io;
  full_io.on_metrics = [&](const StepMetrics& m) { full_trace.push_back(m.value("loss_g")); };
  Checkpoint full = run_step1(ds, full_cfg, full_io);

  RunConfig part_cfg = tiny_cfg();
  part_cfg.step1_epochs = 2;
  TrainIO part_io;
  part_io.run_dir = (dir / "run").string();
  Checkpoint part = run_step1(ds, part_cfg, part_io);
  Checkpoint loaded = load_checkpoint((dir / "run" / "checkpoints" / "step1").string());

  RunConfig resume_cfg = tiny_cfg();
  resume_cfg.step1_epochs = 3;
  std::vector<double> tail_trace;
  TrainIO tail_io;
  tail_io.on_metrics = [&](const StepMetrics& m) { tail_trace.push_back(m.value("loss_g")); };
  Checkpoint resumed = run_step1(ds, resume_cfg, tail_io, loaded);

  const int64_t iters_per_epoch = ds.size() / resume_cfg.batch_size;
  REQUIRE(tail_trace.size() == static_cast<size_t>(iters_per_epoch));
  for (size_t i = 0; i < tail_trace.size(); ++i)
    CHECK(tail_trace[i] == full_trace[full_trace.size() - tail_trace.size() + i]);

  REQUIRE(resumed.tensors.size() == full.tensors.size());
  for (size_t i = 0; i < full.tensors.size(); ++i) {
    CHECK(resumed.tensors[i].name == full.tensors[i].name);
    CHECK(resumed.tensors[i].value == full.tensors[i].value);
  }
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts the iteration naming the step") {
  RunConfig cfg = tiny_cfg();
  SeededRng init(cfg.seed);
  model::Models m = model::init_params(cfg, init);
  // poison a discriminator head so logits become NaN
  for (auto& p : m.d->params())
    if (p.name == "D.head_src.weight")
      (*p.value)[0] = std::numeric_limits<float>::quiet_NaN();

  auto ds = tiny_dataset();
  Tensor<float> batch({cfg.batch_size, 3, 32, 32});
  std::vector<int> labels(static_cast<size_t>(cfg.batch_size), 0);
  for (int64_t i = 0; i < cfg.batch_size; ++i) {
    const auto& img = ds.images[static_cast<size_t>(i)];
    std::copy(img.data(), img.data() + img.numel(), batch.data() + i * img.numel());
  }
  auto opt_g = AdamStateT<float>::init_like(m.g->params());
  auto opt_d = AdamStateT<float>::init_like(m.d->params());
  SeededRng rng(3);
  CHECK_THROWS_WITH_AS((void)train_step1_iteration(batch, labels, *m.g, *m.d, opt_g,
                                                   opt_d, cfg, rng, 17),
                       doctest::Contains("step 17"), NumericError);
}

// Step 2 ----------------------------------------------------------------

namespace {

struct IdentityGenerator final : GeneratorFn {
  // image = z reshaped to (1, s, s); requires z_dim == s*s
  int64_t side;
  explicit IdentityGenerator(int64_t s) : side(s) {}
  Tensor<float> generate(const Tensor<float>& z, const std::vector<int>&) override {
    Tensor<float> img = z;
    img.reshape({z.dim(0), 1, side, side});
    return img;
  }
};

RunConfig inversion_cfg() {
  RunConfig cfg;
  cfg.image_size = 4;  // model-level config for the oracle double
  cfg.channels = 1;
  cfg.z_dim = 16;
  cfg.k = 2;
  cfg.base_channels = 32;
  cfg.batch_size = 64;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("step-2 on the identity generator: MSE falls and G stays frozen") {
  RunConfig cfg = inversion_cfg();
  SeededRng init(SeededRng(cfg.seed).derive("init_e").seed());
  model::Encoder e(cfg, init);
  e.set_training(true);
  auto opt_e = AdamStateT<float>::init_like(e.params());
  IdentityGenerator gfn(4);
  SeededRng rng(SeededRng(cfg.seed).derive("step2").seed());

  std::vector<double> mse;
  for (int64_t t = 0; t < 2000; ++t)
    mse.push_back(train_step2_iteration(gfn, e, opt_e, cfg, rng, t).value("loss_mse"));

  auto avg = [&](size_t from, size_t n) {
    double s = 0;
    for (size_t i = from; i < from + n; ++i) s += mse[i];
    return s / static_cast<double>(n);
  };
  // 500-iteration moving average at iteration 2000 strictly below the start
  CHECK(avg(1500, 500) < avg(0, 500));
  CHECK(mse.back() < 1e-2);
}

TEST_CASE("step-2 determinism and generator freeze with a real generator") {
  RunConfig cfg = tiny_cfg();
  cfg.step1_epochs = 1;
  cfg.step2_steps = 3;
  auto ds = tiny_dataset();
  Checkpoint step1 = run_step1(ds, cfg);

  std::vector<double> t1, t2;
  TrainIO io1, io2;
  io1.on_metrics = [&](const StepMetrics& m) { t1.push_back(m.value("loss_mse")); };
  io2.on_metrics = [&](const StepMetrics& m) { t2.push_back(m.value("loss_mse")); };
  Checkpoint a = run_step2(step1, cfg, io1);
  Checkpoint b = run_step2(step1, cfg, io2);
  REQUIRE(t1.size() == 3);
  CHECK(t1 == t2);
  CHECK(a.has_e);

  // G tensors bit-identical to the step-1 checkpoint
  for (const auto& nt : step1.tensors)
    if (nt.name.rfind("G.", 0) == 0) CHECK(a.require(nt.name) == nt.value);

  // E differs across seeds? same seed -> identical final E
  for (const auto& nt : a.tensors)
    if (nt.name.rfind("E.", 0) == 0) CHECK(b.require(nt.name) == nt.value);
}

TEST_CASE("step-2 degenerate step count returns E at initialization") {
  RunConfig cfg = tiny_cfg();
  cfg.step1_epochs = 0;
  cfg.step2_steps = 0;
  auto ds = tiny_dataset();
  Checkpoint step1 = run_step1(ds, cfg);
  Checkpoint step2 = run_step2(step1, cfg);
  CHECK(step2.step2_iters == 0);
  CHECK(step2.has_e);
  SeededRng init(SeededRng(cfg.seed).derive("init_e").seed());
  model::Encoder e(cfg, init);
  for (auto& p : e.params()) CHECK(step2.require(p.name) == *p.value);
}

TEST_CASE("step-2 requires a generator in the checkpoint") {
  RunConfig cfg = tiny_cfg();
  Checkpoint empty;
  empty.config = cfg;
  CHECK_THROWS_AS((void)run_step2(empty, cfg), DataError);
}
