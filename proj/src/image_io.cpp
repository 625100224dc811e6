#include "xlat/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "xlat/errors.hpp"

namespace xlat::io {

namespace {

ImageU8 read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("png read failed: " + path + ": " + image.message);

  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

  ImageU8 out;
  out.width = image.width;
  out.height = image.height;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(static_cast<size_t>(PNG_IMAGE_SIZE(image)));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("png decode failed: " + path + ": " + image.message);
  }
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw IoError("png write failed: " + path + ": " + image.message);
}

int pnm_next_int(std::istream& in) {
  // skips whitespace and '#' comments per the PNM grammar
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw DataError("pnm: malformed header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

ImageU8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[2];
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw DataError("pnm: unsupported magic in " + path);
  ImageU8 out;
  out.channels = magic[1] == '6' ? 3 : 1;
  out.width = pnm_next_int(in);
  out.height = pnm_next_int(in);
  const int maxval = pnm_next_int(in);
  if (maxval != 255) throw DataError("pnm: only 8-bit images are supported: " + path);
  out.pixels.resize(static_cast<size_t>(out.numel()));
  in.read(reinterpret_cast<char*>(out.pixels.data()),
          static_cast<std::streamsize>(out.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.pixels.size()))
    throw DataError("pnm: truncated pixel data: " + path);
  return out;
}

void write_pnm(const std::string& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("image write failed: " + path);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ImageU8 read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image: " + path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G')
    return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(path);
  throw DataError("unsupported image format: " + path);
}

void write_image(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ContractError("write_image: channels must be 1 or 3");
  if (static_cast<int64_t>(img.pixels.size()) != img.numel())
    throw ContractError("write_image: pixel buffer size mismatch");
  if (ends_with(path, ".png")) {
    write_png(path, img);
  } else if (ends_with(path, ".ppm")) {
    if (img.channels != 3) throw ContractError("write_image: .ppm requires RGB");
    write_pnm(path, img);
  } else if (ends_with(path, ".pgm")) {
    if (img.channels != 1) throw ContractError("write_image: .pgm requires gray");
    write_pnm(path, img);
  } else {
    throw ContractError("write_image: unsupported extension (use .png/.ppm/.pgm): " + path);
  }
}

Tensor<float> to_float(const ImageU8& img, int64_t want_channels) {
  if (want_channels != 1 && want_channels != 3)
    throw ContractError("to_float: want_channels must be 1 or 3");
  Tensor<float> out({want_channels, img.height, img.width});
  const int64_t plane = img.height * img.width;
  for (int64_t i = 0; i < plane; ++i) {
    float rgb[3];
    if (img.channels == 3) {
      for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<float>(img.pixels[static_cast<size_t>(i * 3 + c)]) / 127.5f - 1.0f;
    } else {
      rgb[0] = rgb[1] = rgb[2] =
          static_cast<float>(img.pixels[static_cast<size_t>(i)]) / 127.5f - 1.0f;
    }
    if (want_channels == 3) {
      for (int c = 0; c < 3; ++c) out[c * plane + i] = rgb[c];
    } else {
      out[i] = (rgb[0] + rgb[1] + rgb[2]) / 3.0f;
    }
  }
  return out;
}

ImageU8 to_u8(const Tensor<float>& chw) {
  if (chw.ndim() != 3) throw ContractError("to_u8: expected a (C,H,W) tensor");
  ImageU8 out;
  out.channels = chw.dim(0);
  out.height = chw.dim(1);
  out.width = chw.dim(2);
  if (out.channels != 1 && out.channels != 3)
    throw ContractError("to_u8: channels must be 1 or 3");
  out.pixels.resize(static_cast<size_t>(out.numel()));
  const int64_t plane = out.height * out.width;
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < out.channels; ++c) {
      const float v = (chw[c * plane + i] + 1.0f) * 127.5f;
      const int px = static_cast<int>(std::lround(v));
      out.pixels[static_cast<size_t>(i * out.channels + c)] =
          static_cast<uint8_t>(std::clamp(px, 0, 255));
    }
  }
  return out;
}

ImageU8 center_crop_square(const ImageU8& img) {
  const int64_t side = std::min(img.width, img.height);
  const int64_t x0 = (img.width - side) / 2;
  const int64_t y0 = (img.height - side) / 2;
  ImageU8 out;
  out.width = out.height = side;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(out.numel()));
  for (int64_t y = 0; y < side; ++y) {
    const uint8_t* src = img.pixels.data() + ((y0 + y) * img.width + x0) * img.channels;
    uint8_t* dst = out.pixels.data() + y * side * img.channels;
    std::copy(src, src + side * img.channels, dst);
  }
  return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int64_t out_w, int64_t out_h) {
  ImageU8 out;
  out.width = out_w;
  out.height = out_h;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(out.numel()));
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, img.height - 1);
    const int64_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, img.width - 1);
      const int64_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
      for (int64_t c = 0; c < img.channels; ++c) {
        auto px = [&](int64_t yy, int64_t xx) {
          return static_cast<double>(
              img.pixels[static_cast<size_t>((yy * img.width + xx) * img.channels + c)]);
        };
        const double v = (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) +
                         wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
        out.pixels[static_cast<size_t>((y * out_w + x) * img.channels + c)] =
            static_cast<uint8_t>(std::clamp(static_cast<int>(std::lround(v)), 0, 255));
      }
    }
  }
  return out;
}

}  // namespace xlat::io
