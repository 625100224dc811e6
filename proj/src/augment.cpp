#include "xlat/augment.hpp"

#include <cmath>

#include "xlat/errors.hpp"

namespace xlat::data {

Tensor<float> augment(const Tensor<float>& image, SeededRng& rng,
                      const train::AugmentSettings& settings) {
  if (image.ndim() != 3) throw ContractError("augment: expected a (C,H,W) image");
  const int64_t channels = image.dim(0), size = image.dim(1);
  if (image.dim(2) != size) throw ContractError("augment: image must be square");

  // Raw draws first; disabled transforms ignore theirs.
  const double u_flip = rng.uniform01();
  const double u_theta = rng.uniform01();
  const double u_scale = rng.uniform01();
  const double u_off_x = rng.uniform01();
  const double u_off_y = rng.uniform01();

  const bool do_flip = settings.flip && u_flip < 0.5;
  const double theta =
      settings.rotate
          ? (2.0 * u_theta - 1.0) * settings.rotate_max_deg * (M_PI / 180.0)
          : 0.0;
  const double scale =
      settings.zoom ? settings.zoom_min + (settings.zoom_max - settings.zoom_min) * u_scale
                    : 1.0;
  const double span = static_cast<double>(size) * (scale - 1.0);
  const double off_x = u_off_x * span;
  const double off_y = u_off_y * span;

  Tensor<float> flipped(image.shape());
  if (do_flip) {
    const int64_t plane = size * size;
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t y = 0; y < size; ++y) {
        const float* src = image.data() + c * plane + y * size;
        float* dst = flipped.data() + c * plane + y * size;
        for (int64_t x = 0; x < size; ++x) dst[x] = src[size - 1 - x];
      }
  } else {
    flipped = image;
  }

  if (theta == 0.0 && scale == 1.0) return flipped;

  // Inverse map each output pixel through crop offset, zoom and rotation,
  // then sample bilinearly with clamp-to-edge.
  const double center = static_cast<double>(size) / 2.0;
  const double cos_t = std::cos(-theta), sin_t = std::sin(-theta);
  Tensor<float> out(image.shape());
  const int64_t plane = size * size;
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const double qx = (static_cast<double>(x) + 0.5 + off_x) / scale - center;
      const double qy = (static_cast<double>(y) + 0.5 + off_y) / scale - center;
      const double sx = center + cos_t * qx - sin_t * qy - 0.5;
      const double sy = center + sin_t * qx + cos_t * qy - 0.5;

      const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, size - 1);
      const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, size - 1);
      const int64_t x1 = std::min(x0 + 1, size - 1);
      const int64_t y1 = std::min(y0 + 1, size - 1);
      const double wx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
      const double wy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);

      for (int64_t c = 0; c < channels; ++c) {
        const float* p = flipped.data() + c * plane;
        const double v = (1 - wy) * ((1 - wx) * p[y0 * size + x0] + wx * p[y0 * size + x1]) +
                         wy * ((1 - wx) * p[y1 * size + x0] + wx * p[y1 * size + x1]);
        out[c * plane + y * size + x] =
            std::clamp(static_cast<float>(v), -1.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace xlat::data
