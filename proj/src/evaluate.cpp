#include "xlat/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "xlat/adam.hpp"
#include "xlat/blas.hpp"
#include "xlat/errors.hpp"
#include "xlat/losses.hpp"
#include "xlat/trainer.hpp"
#include "xlat/translate.hpp"

namespace xlat::eval {

namespace obj = xlat::objectives;

namespace {

train::RunConfig trunk_config(const ClassifierConfig& cfg) {
  train::RunConfig rc;
  rc.image_size = cfg.image_size;
  rc.channels = cfg.channels;
  rc.k = cfg.k;
  rc.base_channels = cfg.base_channels;
  return rc;
}

Tensor<float> gather_batch(const std::vector<const Tensor<float>*>& images,
                           int64_t first, int64_t count) {
  const auto& shape = images[static_cast<size_t>(first)]->shape();
  Tensor<float> batch({count, shape[0], shape[1], shape[2]});
  const int64_t plane = shape[0] * shape[1] * shape[2];
  for (int64_t i = 0; i < count; ++i) {
    const Tensor<float>& img = *images[static_cast<size_t>(first + i)];
    std::copy(img.data(), img.data() + plane, batch.data() + i * plane);
  }
  return batch;
}

}  // namespace

DomainClassifier::DomainClassifier(const ClassifierConfig& cfg, SeededRng& rng)
    : cfg_(cfg), trunk_("C", trunk_config(cfg), rng) {
  head_ = nn::DenseT<float>(trunk_.flat_dim(), cfg.k);
  model::init_dense(head_, rng);
}

Tensor<float> DomainClassifier::forward(const Tensor<float>& images) {
  model::check_image_batch(images, cfg_.channels, cfg_.image_size, "classifier");
  return head_.forward(trunk_.forward(images));
}

void DomainClassifier::backward(const Tensor<float>& grad_logits) {
  Tensor<float> g = head_.backward(grad_logits);
  trunk_.backward(g, /*need_input_grad=*/false, /*accumulate_param_grads=*/true);
}

std::vector<int> DomainClassifier::classify(const Tensor<float>& images) {
  set_training(false);
  Tensor<float> logits = forward(images);
  std::vector<int> out(static_cast<size_t>(logits.dim(0)));
  for (int64_t i = 0; i < logits.dim(0); ++i) {
    int64_t arg = 0;
    for (int64_t j = 1; j < cfg_.k; ++j)
      if (logits.at2(i, j) > logits.at2(i, arg)) arg = j;
    out[static_cast<size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

void DomainClassifier::set_training(bool training) { trunk_.set_training(training); }

void DomainClassifier::zero_grad() {
  trunk_.zero_grad();
  head_.zero_grad();
}

std::vector<nn::ParamRef<float>> DomainClassifier::params() {
  std::vector<nn::ParamRef<float>> out;
  trunk_.collect(out);
  head_.collect("C.head", out);
  return out;
}

TrainedClassifier train_domain_classifier(const data::LabeledDataset& dataset,
                                          const ClassifierConfig& cfg) {
  tune_runtime();
  if (!dataset.covers_all_domains())
    throw ConfigError("train_domain_classifier: dataset does not cover all domains");
  if (dataset.k != cfg.k || dataset.image_size != cfg.image_size)
    throw ConfigError("train_domain_classifier: dataset geometry mismatch");

  SeededRng root(cfg.seed);
  SeededRng init = root.derive("init");
  TrainedClassifier result;
  result.net = std::make_unique<DomainClassifier>(cfg, init);

  // Deterministic held-out split.
  std::vector<int64_t> order(static_cast<size_t>(dataset.size()));
  for (int64_t i = 0; i < dataset.size(); ++i) order[static_cast<size_t>(i)] = i;
  SeededRng split_rng = root.derive("split");
  split_rng.shuffle(order);
  const int64_t holdout_n = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(cfg.holdout_fraction *
                                           static_cast<double>(dataset.size()))));
  std::vector<int64_t> holdout(order.begin(), order.begin() + holdout_n);
  std::vector<int64_t> train_idx(order.begin() + holdout_n, order.end());
  if (train_idx.empty())
    throw ConfigError("train_domain_classifier: dataset too small for a held-out split");

  auto holdout_accuracy = [&] {
    result.net->set_training(false);
    int64_t right = 0, total = 0;
    const int64_t plane = dataset.channels * dataset.image_size * dataset.image_size;
    for (int64_t first = 0; first < holdout_n; first += cfg.batch_size) {
      const int64_t count = std::min<int64_t>(cfg.batch_size, holdout_n - first);
      Tensor<float> batch({count, dataset.channels, dataset.image_size, dataset.image_size});
      for (int64_t i = 0; i < count; ++i) {
        const auto& img = dataset.images[static_cast<size_t>(holdout[static_cast<size_t>(first + i)])];
        std::copy(img.data(), img.data() + plane, batch.data() + i * plane);
      }
      const auto pred = result.net->classify(batch);
      for (int64_t i = 0; i < count; ++i) {
        right += pred[static_cast<size_t>(i)] ==
                 dataset.labels[static_cast<size_t>(holdout[static_cast<size_t>(first + i)])];
        ++total;
      }
    }
    return static_cast<double>(right) / static_cast<double>(total);
  };

  const train::AdamHyper hp{cfg.lr, 0.9, 0.999, 1e-8};
  auto opt = train::AdamStateT<float>::init_like(result.net->params());
  SeededRng rng = root.derive("train");
  const int64_t plane = dataset.channels * dataset.image_size * dataset.image_size;

  int64_t steps = 0;
  bool reached = false;
  while (steps < cfg.max_steps && !reached) {
    rng.shuffle(train_idx);
    const int64_t batches = static_cast<int64_t>(train_idx.size()) / cfg.batch_size;
    for (int64_t b = 0; b < batches && steps < cfg.max_steps; ++b) {
      Tensor<float> batch({cfg.batch_size, dataset.channels, dataset.image_size,
                           dataset.image_size});
      std::vector<int> labels(static_cast<size_t>(cfg.batch_size));
      for (int64_t i = 0; i < cfg.batch_size; ++i) {
        const int64_t idx = train_idx[static_cast<size_t>(b * cfg.batch_size + i)];
        const auto& img = dataset.images[static_cast<size_t>(idx)];
        std::copy(img.data(), img.data() + plane, batch.data() + i * plane);
        labels[static_cast<size_t>(i)] = dataset.labels[static_cast<size_t>(idx)];
      }
      result.net->set_training(true);
      result.net->zero_grad();
      Tensor<float> logits = result.net->forward(batch);
      Tensor<float> grad(logits.shape());
      obj::class_ce_grad(logits, labels, grad);
      result.net->backward(grad);
      train::adam_step(result.net->params(), opt, hp);
      ++steps;
    }
    reached = holdout_accuracy() >= cfg.target_holdout_accuracy;
    if (batches == 0) break;
  }
  result.holdout_accuracy = holdout_accuracy();
  result.accuracy_warning = result.holdout_accuracy < cfg.target_holdout_accuracy;
  result.steps_used = steps;
  result.net->set_training(false);
  return result;
}

double domain_flip_rate(model::Encoder& e, model::Generator& g, Judge& judge,
                        const std::vector<Tensor<float>>& test_images, int target) {
  if (test_images.empty()) throw ContractError("domain_flip_rate: empty test set");
  std::vector<const Tensor<float>*> ptrs;
  ptrs.reserve(test_images.size());
  for (const auto& img : test_images) ptrs.push_back(&img);

  int64_t flipped = 0, total = 0;
  const int64_t n = static_cast<int64_t>(test_images.size());
  const int64_t chunk = 64;
  for (int64_t first = 0; first < n; first += chunk) {
    const int64_t count = std::min(chunk, n - first);
    Tensor<float> batch = gather_batch(ptrs, first, count);
    Tensor<float> translated = infer::translate(e, g, batch, target);
    const auto pred = judge.classify(translated);
    for (int v : pred) flipped += v == target;
    total += count;
  }
  return static_cast<double>(flipped) / static_cast<double>(total);
}

double latent_roundtrip_mse(
    const std::function<Tensor<float>(const Tensor<float>&, const std::vector<int>&)>& gen,
    const std::function<Tensor<float>(const Tensor<float>&)>& enc, int64_t n_samples,
    int64_t z_dim, int64_t k, int64_t batch, SeededRng& rng) {
  if (n_samples <= 0) throw ContractError("latent_roundtrip_mse: n_samples must be positive");
  double acc = 0.0;
  int64_t seen = 0;
  while (seen < n_samples) {
    const int64_t count = std::min(batch, n_samples - seen);
    Tensor<float> z({count, z_dim});
    rng.fill_uniform(z, -1, 1);
    std::vector<int> labels(static_cast<size_t>(count));
    for (auto& y : labels) y = static_cast<int>(rng.uniform_int(k));
    Tensor<float> z_hat = enc(gen(z, labels));
    for (int64_t i = 0; i < z.numel(); ++i) {
      const double d = static_cast<double>(z[i]) - static_cast<double>(z_hat[i]);
      acc += d * d;
    }
    seen += count;
  }
  return acc / (static_cast<double>(n_samples) * static_cast<double>(z_dim));
}

double latent_roundtrip_mse(model::Generator& g, model::Encoder& e,
                            int64_t n_samples, SeededRng& rng) {
  g.set_training(false);
  e.set_training(false);
  return latent_roundtrip_mse(
      [&](const Tensor<float>& z, const std::vector<int>& labels) {
        return g.forward(z, labels);
      },
      [&](const Tensor<float>& x) { return e.forward(x); }, n_samples,
      g.config().z_dim, g.config().k, g.config().batch_size, rng);
}

namespace {

struct ForegroundMass {
  double total = 0;
  double mx = 0, my = 0;
  double peak = 0;
};

ForegroundMass foreground_mass(const Tensor<float>& x) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<float> med(static_cast<size_t>(c));
  std::vector<float> scratch(static_cast<size_t>(h * w));
  for (int64_t ch = 0; ch < c; ++ch) {
    std::copy(x.data() + ch * h * w, x.data() + (ch + 1) * h * w, scratch.begin());
    std::nth_element(scratch.begin(), scratch.begin() + scratch.size() / 2, scratch.end());
    med[static_cast<size_t>(ch)] = scratch[scratch.size() / 2];
  }
  ForegroundMass m;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t px = 0; px < w; ++px) {
      double wgt = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        wgt += std::fabs(static_cast<double>(x[(ch * h + y) * w + px]) -
                         static_cast<double>(med[static_cast<size_t>(ch)]));
      m.total += wgt;
      m.mx += wgt * (static_cast<double>(px) + 0.5);
      m.my += wgt * (static_cast<double>(y) + 0.5);
      m.peak = std::max(m.peak, wgt);
    }
  return m;
}

constexpr double kMassEps = 1e-9;

}  // namespace

std::optional<std::pair<double, double>> foreground_centroid(const Tensor<float>& x) {
  if (x.ndim() != 3) throw ContractError("foreground_centroid: expected a (C,H,W) image");
  const ForegroundMass m = foreground_mass(x);
  if (m.total <= kMassEps) return std::nullopt;
  return std::make_pair(m.mx / m.total, m.my / m.total);
}

std::optional<double> foreground_size(const Tensor<float>& x, int domain) {
  if (x.ndim() != 3) throw ContractError("foreground_size: expected a (C,H,W) image");
  const ForegroundMass m = foreground_mass(x);
  if (m.total <= kMassEps || m.peak <= kMassEps) return std::nullopt;
  const double area = m.total / m.peak;  // effective covered pixels
  if (domain == 0) return std::sqrt(area / M_PI);
  return std::sqrt(area) / 2.0;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["generated_sample_class_accuracy"] = generated_sample_class_accuracy;
  nlohmann::ordered_json flips;
  for (const auto& [k, v] : translation_domain_flip_rate) flips[k] = v;
  j["translation_domain_flip_rate"] = flips;
  j["latent_roundtrip_mse"] = latent_roundtrip_mse;
  j["centroid_error_mean_px"] = centroid_error_mean_px;
  j["centroid_error_p95_px"] = centroid_error_p95_px;
  j["centroid_undefined_count"] = centroid_undefined_count;
  j["size_error_px"] = size_error_px;
  j["cycle_l1"] = cycle_l1;
  j["classifier_holdout_accuracy"] = classifier_holdout_accuracy;
  j["classifier_warning"] = classifier_warning;
  j["omitted"] = omitted;
  j["config"] = config_snapshot;
  j["dataset"] = dataset_provenance;
  return j;
}

void EvalReport::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write evaluation report to " + path);
  out << to_json().dump(2) << "\n";
}

EvalReport evaluate_run(const train::Checkpoint& ckpt,
                        const data::LabeledDataset& dataset, const EvalConfig& cfg) {
  tune_runtime();
  if (!ckpt.has_g) throw DataError("evaluate_run: checkpoint lacks a generator");
  if (dataset.size() == 0) throw ConfigError("evaluate_run: dataset is empty");
  if (dataset.k != ckpt.config.k || dataset.image_size != ckpt.config.image_size ||
      dataset.channels != ckpt.config.channels)
    throw ConfigError("evaluate_run: dataset geometry does not match the checkpoint");

  model::Models models = train::rebuild_models(ckpt, /*need_e=*/false);
  EvalReport report;
  report.config_snapshot = ckpt.config.to_json();
  report.dataset_provenance = dataset.provenance.details;
  report.dataset_provenance["kind"] = dataset.provenance.kind;

  SeededRng root(cfg.seed);

  // Split: classifier training set vs translation test slice.
  std::vector<int64_t> order(static_cast<size_t>(dataset.size()));
  for (int64_t i = 0; i < dataset.size(); ++i) order[static_cast<size_t>(i)] = i;
  SeededRng split_rng = root.derive("eval_split");
  split_rng.shuffle(order);
  const int64_t train_n = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(cfg.classifier_train_fraction *
                                           static_cast<double>(dataset.size()))));

  data::LabeledDataset clf_train;
  clf_train.image_size = dataset.image_size;
  clf_train.channels = dataset.channels;
  clf_train.k = dataset.k;
  clf_train.provenance = dataset.provenance;
  for (int64_t i = 0; i < train_n; ++i) {
    const int64_t idx = order[static_cast<size_t>(i)];
    clf_train.images.push_back(dataset.images[static_cast<size_t>(idx)]);
    clf_train.labels.push_back(dataset.labels[static_cast<size_t>(idx)]);
  }

  ClassifierConfig ccfg = cfg.classifier;
  ccfg.image_size = dataset.image_size;
  ccfg.channels = dataset.channels;
  ccfg.k = dataset.k;
  ccfg.seed = root.derive("classifier").seed();
  TrainedClassifier judge = train_domain_classifier(clf_train, ccfg);
  report.classifier_holdout_accuracy = judge.holdout_accuracy;
  report.classifier_warning = judge.accuracy_warning;

  // Generated-sample class accuracy: balanced labels, fresh z.
  {
    SeededRng gen_rng = root.derive("gen");
    models.g->set_training(false);
    int64_t right = 0, total = 0;
    while (total < cfg.n_generated) {
      const int64_t count = std::min<int64_t>(64, cfg.n_generated - total);
      Tensor<float> z = train::sample_latent(count, ckpt.config.z_dim, gen_rng);
      std::vector<int> labels(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i)
        labels[static_cast<size_t>(i)] = static_cast<int>((total + i) % ckpt.config.k);
      Tensor<float> imgs = models.g->forward(z, labels);
      const auto pred = judge.net->classify(imgs);
      for (int64_t i = 0; i < count; ++i)
        right += pred[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)];
      total += count;
    }
    report.generated_sample_class_accuracy =
        static_cast<double>(right) / static_cast<double>(total);
  }

  if (!ckpt.has_e) {
    report.omitted = {"translation_domain_flip_rate", "latent_roundtrip_mse",
                      "centroid_error_px", "size_error_px", "cycle_l1"};
    return report;
  }

  // Test slice grouped by source domain, attributes carried along.
  std::vector<std::vector<Tensor<float>>> test_by_domain(static_cast<size_t>(dataset.k));
  std::vector<std::vector<data::SampleAttributes>> attrs_by_domain(
      static_cast<size_t>(dataset.k));
  for (int64_t i = train_n; i < dataset.size(); ++i) {
    const int64_t idx = order[static_cast<size_t>(i)];
    const int y = dataset.labels[static_cast<size_t>(idx)];
    test_by_domain[static_cast<size_t>(y)].push_back(dataset.images[static_cast<size_t>(idx)]);
    if (dataset.has_attributes())
      attrs_by_domain[static_cast<size_t>(y)].push_back(dataset.attrs[static_cast<size_t>(idx)]);
  }
  for (int64_t a = 0; a < dataset.k; ++a)
    if (test_by_domain[static_cast<size_t>(a)].empty())
      throw ConfigError("evaluate_run: test slice is missing domain " + std::to_string(a));

  // Flip rates per ordered direction.
  for (int64_t a = 0; a < dataset.k; ++a)
    for (int64_t b = 0; b < dataset.k; ++b) {
      if (a == b) continue;
      const double rate = domain_flip_rate(*models.e, *models.g, *judge.net,
                                           test_by_domain[static_cast<size_t>(a)],
                                           static_cast<int>(b));
      report.translation_domain_flip_rate[std::to_string(a) + "->" + std::to_string(b)] =
          rate;
    }

  {
    SeededRng rt_rng = root.derive("roundtrip");
    report.latent_roundtrip_mse =
        latent_roundtrip_mse(*models.g, *models.e, cfg.n_roundtrip, rt_rng);
  }

  // Attribute preservation and cycle error over the test slice.
  std::vector<double> centroid_errors;
  std::vector<double> size_errors;
  double cycle_acc = 0.0;
  int64_t cycle_count = 0;
  for (int64_t a = 0; a < dataset.k; ++a) {
    const int b = static_cast<int>((a + 1) % dataset.k);
    const auto& images = test_by_domain[static_cast<size_t>(a)];
    const auto& attrs = attrs_by_domain[static_cast<size_t>(a)];
    for (size_t i = 0; i < images.size(); ++i) {
      auto [x_ab, x_aba] = infer::roundtrip(*models.e, *models.g, images[i],
                                            static_cast<int>(a), b);
      const auto c_in = foreground_centroid(images[i]);
      const auto c_out = foreground_centroid(x_ab);
      if (c_in && c_out) {
        const double dx = c_in->first - c_out->first;
        const double dy = c_in->second - c_out->second;
        centroid_errors.push_back(std::sqrt(dx * dx + dy * dy));
      } else {
        report.centroid_undefined_count++;
      }
      if (!attrs.empty()) {
        const auto sz = foreground_size(x_ab, b);
        if (sz) size_errors.push_back(std::fabs(*sz - attrs[i].size));
      }
      double l1 = 0;
      for (int64_t j = 0; j < images[i].numel(); ++j)
        l1 += std::fabs(static_cast<double>(images[i][j]) - static_cast<double>(x_aba[j]));
      cycle_acc += l1 / static_cast<double>(images[i].numel());
      ++cycle_count;
    }
  }
  if (!centroid_errors.empty()) {
    double sum = 0;
    for (double v : centroid_errors) sum += v;
    report.centroid_error_mean_px = sum / static_cast<double>(centroid_errors.size());
    std::sort(centroid_errors.begin(), centroid_errors.end());
    const auto n = centroid_errors.size();
    size_t idx = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
    idx = idx == 0 ? 0 : idx - 1;
    report.centroid_error_p95_px = centroid_errors[std::min(idx, n - 1)];
  }
  if (!size_errors.empty()) {
    double sum = 0;
    for (double v : size_errors) sum += v;
    report.size_error_px = sum / static_cast<double>(size_errors.size());
  }
  report.cycle_l1 = cycle_count ? cycle_acc / static_cast<double>(cycle_count) : 0.0;
  return report;
}

}  // namespace xlat::eval
