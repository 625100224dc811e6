#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlat/tensor.hpp"

namespace xlat::io {

/// 8-bit interleaved image, row-major HWC; channels is 1 or 3.
struct ImageU8 {
  int64_t width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  int64_t numel() const { return width * height * channels; }
};

/// Reads PNG or binary PNM (P5/P6); the format is sniffed from the header.
ImageU8 read_image(const std::string& path);

/// Writes by extension: .png, .ppm (RGB) or .pgm (gray).
void write_image(const std::string& path, const ImageU8& img);

/// [0,255] -> [-1,1], HWC -> CHW. want_channels converts gray<->RGB.
Tensor<float> to_float(const ImageU8& img, int64_t want_channels);

/// [-1,1] CHW -> [0,255] HWC with round-to-nearest.
ImageU8 to_u8(const Tensor<float>& chw);

ImageU8 center_crop_square(const ImageU8& img);
ImageU8 resize_bilinear(const ImageU8& img, int64_t out_w, int64_t out_h);

}  // namespace xlat::io
