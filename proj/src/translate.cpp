#include "xlat/translate.hpp"

#include "xlat/errors.hpp"
#include "xlat/image_io.hpp"

namespace xlat::infer {

namespace {

void check_compatible(const model::Encoder& e, const model::Generator& g) {
  if (!e.config().structure_matches(g.config()))
    throw ContractError("translate: encoder/generator configs differ (" +
                        e.config().structure_diff(g.config()) + ")");
}

}  // namespace

Tensor<float> translate(model::Encoder& e, model::Generator& g,
                        const Tensor<float>& x, int c_target) {
  check_compatible(e, g);
  if (c_target < 0 || c_target >= g.config().k)
    throw DomainError("translate: target domain out of range [0, K)");

  const bool single = x.ndim() == 3;
  Tensor<float> batch = x;
  if (single) batch.reshape({1, x.dim(0), x.dim(1), x.dim(2)});

  e.set_training(false);
  g.set_training(false);
  Tensor<float> z = e.forward(batch);
  std::vector<int> labels(static_cast<size_t>(batch.dim(0)), c_target);
  Tensor<float> out = g.forward(z, labels);
  if (single) out.reshape({out.dim(1), out.dim(2), out.dim(3)});
  return out;
}

std::pair<Tensor<float>, Tensor<float>> roundtrip(model::Encoder& e,
                                                  model::Generator& g,
                                                  const Tensor<float>& x,
                                                  int c_source, int c_target) {
  if (c_source < 0 || c_source >= g.config().k)
    throw DomainError("roundtrip: source domain out of range [0, K)");
  Tensor<float> x_ab = translate(e, g, x, c_target);
  Tensor<float> x_aba = translate(e, g, x_ab, c_source);
  return {std::move(x_ab), std::move(x_aba)};
}

void write_sample_grid(const std::vector<Tensor<float>>& images, int64_t columns,
                       const std::string& path) {
  if (images.empty()) throw ContractError("write_sample_grid: no images");
  if (columns < 1) throw ContractError("write_sample_grid: columns must be positive");
  const auto& shape = images.front().shape();
  if (shape.size() != 3) throw ContractError("write_sample_grid: images must be (C,H,W)");
  for (const auto& img : images)
    if (img.shape() != shape) throw ContractError("write_sample_grid: mixed image shapes");

  const int64_t c = shape[0], h = shape[1], w = shape[2];
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t cols = std::min(columns, n);
  const int64_t rows = (n + cols - 1) / cols;

  Tensor<float> canvas({c, rows * h, cols * w});
  for (int64_t i = 0; i < n; ++i) {
    const int64_t r = i / cols, col = i % cols;
    const auto& img = images[static_cast<size_t>(i)];
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h; ++y) {
        const float* src = img.data() + (ch * h + y) * w;
        float* dst = canvas.data() + (ch * rows * h + (r * h + y)) * cols * w + col * w;
        for (int64_t x = 0; x < w; ++x) dst[x] = src[x];
      }
  }
  io::write_image(path, io::to_u8(canvas));
}

std::vector<Tensor<float>> interleave_pairs(const std::vector<Tensor<float>>& inputs,
                                            const std::vector<Tensor<float>>& outputs) {
  if (inputs.size() != outputs.size())
    throw ContractError("interleave_pairs: input/output counts differ");
  std::vector<Tensor<float>> out;
  out.reserve(inputs.size() * 2);
  for (size_t i = 0; i < inputs.size(); ++i) {
    out.push_back(inputs[i]);
    out.push_back(outputs[i]);
  }
  return out;
}

}  // namespace xlat::infer
