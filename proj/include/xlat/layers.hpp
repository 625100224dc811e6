#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xlat/blas.hpp"
#include "xlat/errors.hpp"
#include "xlat/tensor.hpp"

namespace xlat::nn {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

/// Reallocates only when the shape changes, so per-iteration scratch keeps
/// its pages across calls.
template <typename T>
void ensure_shape(Tensor<T>& t, const std::vector<int64_t>& shape) {
  if (t.shape() != shape) t = Tensor<T>(shape);
}

// ---------------------------------------------------------------------------
// im2col / col2im
//
// Column matrices are laid out (C*k*k) x (B*Ho*Wo) row-major; the column block
// of image b spans [b*Ho*Wo, (b+1)*Ho*Wo). The same two kernels serve Conv2d
// and (with in/out roles swapped) ConvTranspose2d.
// ---------------------------------------------------------------------------

namespace detail {

/// Valid output range [lo, hi) for which base + o * stride lands in [0, n).
inline void valid_range(int64_t base, int64_t stride, int64_t n, int64_t out_n,
                        int64_t& lo, int64_t& hi) {
  lo = base < 0 ? (-base + stride - 1) / stride : 0;
  hi = base < n ? std::min(out_n, (n - base + stride - 1) / stride) : 0;
  if (hi < lo) hi = lo;
}

}  // namespace detail

template <typename T>
void im2col_block(const T* img, int64_t channels, int64_t height, int64_t width,
                  int64_t kernel, int64_t stride, int64_t pad, int64_t out_h,
                  int64_t out_w, T* cols, int64_t col_offset, int64_t col_ld) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t ky = 0; ky < kernel; ++ky) {
      for (int64_t kx = 0; kx < kernel; ++kx) {
        const int64_t row = (c * kernel + ky) * kernel + kx;
        T* dst = cols + row * col_ld + col_offset;
        const T* src_plane = img + c * height * width;
        int64_t ox_lo, ox_hi;
        detail::valid_range(kx - pad, stride, width, out_w, ox_lo, ox_hi);
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          T* drow = dst + oy * out_w;
          if (iy < 0 || iy >= height) {
            for (int64_t ox = 0; ox < out_w; ++ox) drow[ox] = T(0);
            continue;
          }
          const T* src_row = src_plane + iy * width + (kx - pad);
          for (int64_t ox = 0; ox < ox_lo; ++ox) drow[ox] = T(0);
          for (int64_t ox = ox_lo; ox < ox_hi; ++ox) drow[ox] = src_row[ox * stride];
          for (int64_t ox = ox_hi; ox < out_w; ++ox) drow[ox] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_block_add(const T* cols, int64_t col_offset, int64_t col_ld,
                      int64_t channels, int64_t height, int64_t width,
                      int64_t kernel, int64_t stride, int64_t pad, int64_t out_h,
                      int64_t out_w, T* img) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t ky = 0; ky < kernel; ++ky) {
      for (int64_t kx = 0; kx < kernel; ++kx) {
        const int64_t row = (c * kernel + ky) * kernel + kx;
        const T* src = cols + row * col_ld + col_offset;
        T* dst_plane = img + c * height * width;
        int64_t ox_lo, ox_hi;
        detail::valid_range(kx - pad, stride, width, out_w, ox_lo, ox_hi);
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          T* dst_row = dst_plane + iy * width + (kx - pad);
          const T* srow = src + oy * out_w;
          for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dst_row[ox * stride] += srow[ox];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

template <typename T>
struct DenseT {
  int64_t in_features = 0, out_features = 0;
  Tensor<T> weight, bias, grad_weight, grad_bias;
  Tensor<T> cached_input;

  DenseT() = default;
  DenseT(int64_t in, int64_t out)
      : in_features(in),
        out_features(out),
        weight({out, in}),
        bias({out}),
        grad_weight({out, in}),
        grad_bias({out}) {}

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 2 || x.dim(1) != in_features)
      throw ContractError("dense: input shape mismatch");
    const int64_t batch = x.dim(0);
    cached_input = x;
    Tensor<T> y({batch, out_features});
    gemm(false, true, batch, out_features, in_features, T(1), x.data(),
         in_features, weight.data(), in_features, T(0), y.data(), out_features);
    for (int64_t b = 0; b < batch; ++b) {
      T* row = y.data() + b * out_features;
      for (int64_t o = 0; o < out_features; ++o) row[o] += bias[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true,
                     bool accumulate_param_grads = true) {
    const int64_t batch = cached_input.dim(0);
    require_shape(grad_out, {batch, out_features}, "dense backward");
    if (accumulate_param_grads) {
      gemm(true, false, out_features, in_features, batch, T(1), grad_out.data(),
           out_features, cached_input.data(), in_features, T(1),
           grad_weight.data(), in_features);
      for (int64_t b = 0; b < batch; ++b) {
        const T* row = grad_out.data() + b * out_features;
        for (int64_t o = 0; o < out_features; ++o) grad_bias[o] += row[o];
      }
    }
    Tensor<T> dx;
    if (need_input_grad) {
      dx = Tensor<T>({batch, in_features});
      gemm(false, false, batch, in_features, out_features, T(1), grad_out.data(),
           out_features, weight.data(), in_features, T(0), dx.data(),
           in_features);
    }
    return dx;
  }

  void zero_grad() {
    grad_weight.zero();
    grad_bias.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

// ---------------------------------------------------------------------------
// Conv2d: weight (Cout, Cin, k, k), stride s, symmetric zero pad p.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dT {
  int64_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
  Tensor<T> weight, bias, grad_weight, grad_bias;
  Tensor<T> cached_cols;  // (Cin*k*k) x (B*Ho*Wo)
  Tensor<T> scratch_y0_, scratch_dy0_, scratch_dcols_;
  std::vector<int64_t> in_shape;

  Conv2dT() = default;
  Conv2dT(int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p)
      : in_channels(cin),
        out_channels(cout),
        kernel(k),
        stride(s),
        pad(p),
        weight({cout, cin, k, k}),
        bias({cout}),
        grad_weight({cout, cin, k, k}),
        grad_bias({cout}) {}

  int64_t out_size(int64_t in) const { return (in + 2 * pad - kernel) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != in_channels)
      throw ContractError("conv2d: input shape mismatch");
    in_shape = x.shape();
    const int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t oh = out_size(h), ow = out_size(w);
    const int64_t ckk = in_channels * kernel * kernel;
    const int64_t ncols = batch * oh * ow;

    ensure_shape(cached_cols, {ckk, ncols});
    for (int64_t b = 0; b < batch; ++b) {
      im2col_block(x.data() + b * in_channels * h * w, in_channels, h, w, kernel,
                   stride, pad, oh, ow, cached_cols.data(), b * oh * ow, ncols);
    }

    ensure_shape(scratch_y0_, {out_channels, ncols});
    Tensor<T>& y0 = scratch_y0_;
    gemm(false, false, out_channels, ncols, ckk, T(1), weight.data(), ckk,
         cached_cols.data(), ncols, T(0), y0.data(), ncols);

    Tensor<T> out({batch, out_channels, oh, ow});
    const int64_t plane = oh * ow;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t co = 0; co < out_channels; ++co) {
        const T* src = y0.data() + co * ncols + b * plane;
        T* dst = out.data() + (b * out_channels + co) * plane;
        const T bv = bias[co];
        for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true,
                     bool accumulate_param_grads = true) {
    const int64_t batch = in_shape[0], h = in_shape[2], w = in_shape[3];
    const int64_t oh = out_size(h), ow = out_size(w);
    const int64_t ckk = in_channels * kernel * kernel;
    const int64_t ncols = batch * oh * ow;
    const int64_t plane = oh * ow;
    require_shape(grad_out, {batch, out_channels, oh, ow}, "conv2d backward");

    ensure_shape(scratch_dy0_, {out_channels, ncols});
    Tensor<T>& dy0 = scratch_dy0_;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t co = 0; co < out_channels; ++co) {
        const T* src = grad_out.data() + (b * out_channels + co) * plane;
        T* dst = dy0.data() + co * ncols + b * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
      }
    }

    if (accumulate_param_grads) {
      gemm(false, true, out_channels, ckk, ncols, T(1), dy0.data(), ncols,
           cached_cols.data(), ncols, T(1), grad_weight.data(), ckk);
      for (int64_t co = 0; co < out_channels; ++co) {
        const T* row = dy0.data() + co * ncols;
        T acc = T(0);
        for (int64_t i = 0; i < ncols; ++i) acc += row[i];
        grad_bias[co] += acc;
      }
    }

    Tensor<T> dx;
    if (need_input_grad) {
      ensure_shape(scratch_dcols_, {ckk, ncols});
      Tensor<T>& dcols = scratch_dcols_;
      gemm(true, false, ckk, ncols, out_channels, T(1), weight.data(), ckk,
           dy0.data(), ncols, T(0), dcols.data(), ncols);
      dx = Tensor<T>(in_shape);
      for (int64_t b = 0; b < batch; ++b) {
        col2im_block_add(dcols.data(), b * oh * ow, ncols, in_channels, h, w,
                         kernel, stride, pad, oh, ow,
                         dx.data() + b * in_channels * h * w);
      }
    }
    return dx;
  }

  void zero_grad() {
    grad_weight.zero();
    grad_bias.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

// ---------------------------------------------------------------------------
// ConvTranspose2d: weight (Cin, Cout, k, k); output (Hi-1)*s - 2p + k.
// Forward is the adjoint of Conv2d, so im2col/col2im swap roles.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvTranspose2dT {
  int64_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
  Tensor<T> weight, bias, grad_weight, grad_bias;
  Tensor<T> cached_x0;  // Cin x (B*Hi*Wi)
  Tensor<T> scratch_cols_, scratch_dcols_, scratch_dx0_;
  std::vector<int64_t> in_shape;

  ConvTranspose2dT() = default;
  ConvTranspose2dT(int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p)
      : in_channels(cin),
        out_channels(cout),
        kernel(k),
        stride(s),
        pad(p),
        weight({cin, cout, k, k}),
        bias({cout}),
        grad_weight({cin, cout, k, k}),
        grad_bias({cout}) {}

  int64_t out_size(int64_t in) const { return (in - 1) * stride - 2 * pad + kernel; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != in_channels)
      throw ContractError("conv_transpose2d: input shape mismatch");
    in_shape = x.shape();
    const int64_t batch = x.dim(0), hi = x.dim(2), wi = x.dim(3);
    const int64_t ho = out_size(hi), wo = out_size(wi);
    const int64_t ckk = out_channels * kernel * kernel;
    const int64_t ncols = batch * hi * wi;
    const int64_t in_plane = hi * wi;

    ensure_shape(cached_x0, {in_channels, ncols});
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t ci = 0; ci < in_channels; ++ci) {
        const T* src = x.data() + (b * in_channels + ci) * in_plane;
        T* dst = cached_x0.data() + ci * ncols + b * in_plane;
        for (int64_t i = 0; i < in_plane; ++i) dst[i] = src[i];
      }
    }

    ensure_shape(scratch_cols_, {ckk, ncols});
    Tensor<T>& cols = scratch_cols_;
    gemm(true, false, ckk, ncols, in_channels, T(1), weight.data(), ckk,
         cached_x0.data(), ncols, T(0), cols.data(), ncols);

    Tensor<T> out({batch, out_channels, ho, wo});
    const int64_t out_plane = ho * wo;
    for (int64_t b = 0; b < batch; ++b) {
      T* img = out.data() + b * out_channels * out_plane;
      for (int64_t co = 0; co < out_channels; ++co) {
        T* plane_ptr = img + co * out_plane;
        const T bv = bias[co];
        for (int64_t i = 0; i < out_plane; ++i) plane_ptr[i] = bv;
      }
      col2im_block_add(cols.data(), b * in_plane, ncols, out_channels, ho, wo,
                       kernel, stride, pad, hi, wi, img);
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true,
                     bool accumulate_param_grads = true) {
    const int64_t batch = in_shape[0], hi = in_shape[2], wi = in_shape[3];
    const int64_t ho = out_size(hi), wo = out_size(wi);
    const int64_t ckk = out_channels * kernel * kernel;
    const int64_t ncols = batch * hi * wi;
    const int64_t in_plane = hi * wi;
    require_shape(grad_out, {batch, out_channels, ho, wo},
                  "conv_transpose2d backward");

    ensure_shape(scratch_dcols_, {ckk, ncols});
    Tensor<T>& dcols = scratch_dcols_;
    for (int64_t b = 0; b < batch; ++b) {
      im2col_block(grad_out.data() + b * out_channels * ho * wo, out_channels,
                   ho, wo, kernel, stride, pad, hi, wi, dcols.data(),
                   b * in_plane, ncols);
    }

    if (accumulate_param_grads) {
      gemm(false, true, in_channels, ckk, ncols, T(1), cached_x0.data(), ncols,
           dcols.data(), ncols, T(1), grad_weight.data(), ckk);
      const int64_t out_plane = ho * wo;
      for (int64_t co = 0; co < out_channels; ++co) {
        T acc = T(0);
        for (int64_t b = 0; b < batch; ++b) {
          const T* src = grad_out.data() + (b * out_channels + co) * out_plane;
          for (int64_t i = 0; i < out_plane; ++i) acc += src[i];
        }
        grad_bias[co] += acc;
      }
    }

    Tensor<T> dx;
    if (need_input_grad) {
      ensure_shape(scratch_dx0_, {in_channels, ncols});
      Tensor<T>& dx0 = scratch_dx0_;
      gemm(false, false, in_channels, ncols, ckk, T(1), weight.data(), ckk,
           dcols.data(), ncols, T(0), dx0.data(), ncols);
      dx = Tensor<T>(in_shape);
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t ci = 0; ci < in_channels; ++ci) {
          const T* src = dx0.data() + ci * ncols + b * in_plane;
          T* dst = dx.data() + (b * in_channels + ci) * in_plane;
          for (int64_t i = 0; i < in_plane; ++i) dst[i] = src[i];
        }
      }
    }
    return dx;
  }

  void zero_grad() {
    grad_weight.zero();
    grad_bias.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

// ---------------------------------------------------------------------------
// BatchNorm2d. Biased batch variance; running stats updated as
// running = momentum * running + (1 - momentum) * batch.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm2dT {
  int64_t channels = 0;
  double momentum = 0.9;
  double eps = 1e-5;
  bool training = true;
  Tensor<T> gamma, beta, grad_gamma, grad_beta;
  Tensor<T> running_mean, running_var;
  Tensor<T> cached_xhat;
  std::vector<T> cached_invstd;

  BatchNorm2dT() = default;
  explicit BatchNorm2dT(int64_t c)
      : channels(c),
        gamma(Tensor<T>::full({c}, T(1))),
        beta({c}),
        grad_gamma({c}),
        grad_beta({c}),
        running_mean({c}),
        running_var(Tensor<T>::full({c}, T(1))) {}

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != channels)
      throw ContractError("batchnorm: input shape mismatch");
    const int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t plane = h * w;
    const int64_t n = batch * plane;
    Tensor<T> y(x.shape());

    if (!training) {
      for (int64_t c = 0; c < channels; ++c) {
        const T scale = gamma[c] / static_cast<T>(std::sqrt(
                                       static_cast<double>(running_var[c]) + eps));
        const T shift = beta[c] - scale * running_mean[c];
        for (int64_t b = 0; b < batch; ++b) {
          const T* src = x.data() + (b * channels + c) * plane;
          T* dst = y.data() + (b * channels + c) * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] = scale * src[i] + shift;
        }
      }
      return y;
    }

    ensure_shape(cached_xhat, x.shape());
    cached_invstd.assign(static_cast<size_t>(channels), T(0));
    for (int64_t c = 0; c < channels; ++c) {
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0, q0 = 0, q1 = 0, q2 = 0, q3 = 0;
      for (int64_t b = 0; b < batch; ++b) {
        const T* src = x.data() + (b * channels + c) * plane;
        int64_t i = 0;
        for (; i + 4 <= plane; i += 4) {
          const double v0 = src[i], v1 = src[i + 1], v2 = src[i + 2], v3 = src[i + 3];
          s0 += v0; s1 += v1; s2 += v2; s3 += v3;
          q0 += v0 * v0; q1 += v1 * v1; q2 += v2 * v2; q3 += v3 * v3;
        }
        for (; i < plane; ++i) {
          const double v = src[i];
          s0 += v;
          q0 += v * v;
        }
      }
      const double sum = (s0 + s1) + (s2 + s3);
      const double sumsq = (q0 + q1) + (q2 + q3);
      const double mean = sum / static_cast<double>(n);
      double var = sumsq / static_cast<double>(n) - mean * mean;
      if (var < 0.0) var = 0.0;
      const double invstd = 1.0 / std::sqrt(var + eps);
      cached_invstd[static_cast<size_t>(c)] = static_cast<T>(invstd);

      running_mean[c] = static_cast<T>(momentum * static_cast<double>(running_mean[c]) +
                                       (1.0 - momentum) * mean);
      running_var[c] = static_cast<T>(momentum * static_cast<double>(running_var[c]) +
                                      (1.0 - momentum) * var);

      const T g = gamma[c], bt = beta[c];
      const T m = static_cast<T>(mean), is = static_cast<T>(invstd);
      for (int64_t b = 0; b < batch; ++b) {
        const T* src = x.data() + (b * channels + c) * plane;
        T* xh = cached_xhat.data() + (b * channels + c) * plane;
        T* dst = y.data() + (b * channels + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const T v = (src[i] - m) * is;
          xh[i] = v;
          dst[i] = g * v + bt;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true,
                     bool accumulate_param_grads = true) {
    if (!training)
      throw ContractError("batchnorm backward requires training mode");
    require_shape(grad_out, cached_xhat.shape(), "batchnorm backward");
    const int64_t batch = grad_out.dim(0), h = grad_out.dim(2), w = grad_out.dim(3);
    const int64_t plane = h * w;
    const int64_t n = batch * plane;

    Tensor<T> dx;
    if (need_input_grad) dx = Tensor<T>(grad_out.shape());
    for (int64_t c = 0; c < channels; ++c) {
      double s0 = 0, s1 = 0, x0 = 0, x1 = 0;
      for (int64_t b = 0; b < batch; ++b) {
        const T* dy = grad_out.data() + (b * channels + c) * plane;
        const T* xh = cached_xhat.data() + (b * channels + c) * plane;
        int64_t i = 0;
        for (; i + 2 <= plane; i += 2) {
          s0 += dy[i];
          s1 += dy[i + 1];
          x0 += static_cast<double>(dy[i]) * xh[i];
          x1 += static_cast<double>(dy[i + 1]) * xh[i + 1];
        }
        for (; i < plane; ++i) {
          s0 += dy[i];
          x0 += static_cast<double>(dy[i]) * xh[i];
        }
      }
      const double sum_dy = s0 + s1;
      const double sum_dy_xhat = x0 + x1;
      if (accumulate_param_grads) {
        grad_gamma[c] += static_cast<T>(sum_dy_xhat);
        grad_beta[c] += static_cast<T>(sum_dy);
      }
      if (need_input_grad) {
        const T scale = gamma[c] * cached_invstd[static_cast<size_t>(c)];
        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(n));
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(n));
        for (int64_t b = 0; b < batch; ++b) {
          const T* dy = grad_out.data() + (b * channels + c) * plane;
          const T* xh = cached_xhat.data() + (b * channels + c) * plane;
          T* dst = dx.data() + (b * channels + c) * plane;
          for (int64_t i = 0; i < plane; ++i)
            dst[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
      }
    }
    return dx;
  }

  void zero_grad() {
    grad_gamma.zero();
    grad_beta.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
    out.push_back({prefix + ".beta", &beta, &grad_beta});
  }

  void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
struct ReLUT {
  Tensor<T> cached_y;
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    cached_y = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    require_shape(dy, cached_y.shape(), "relu backward");
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i)
      dx[i] = cached_y[i] > T(0) ? dy[i] : T(0);
    return dx;
  }
};

template <typename T>
struct LeakyReLUT {
  T slope = T(0.2);
  Tensor<T> cached_x;
  LeakyReLUT() = default;
  explicit LeakyReLUT(T s) : slope(s) {}
  Tensor<T> forward(const Tensor<T>& x) {
    cached_x = x;
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
      y[i] = x[i] > T(0) ? x[i] : slope * x[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    require_shape(dy, cached_x.shape(), "leaky_relu backward");
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i)
      dx[i] = cached_x[i] > T(0) ? dy[i] : slope * dy[i];
    return dx;
  }
};

/// Tanh clamped one ulp inside (-1, 1) so downstream range contracts hold
/// even where the float tanh saturates exactly to +-1.
template <typename T>
struct TanhT {
  Tensor<T> cached_y;
  Tensor<T> forward(const Tensor<T>& x) {
    const T lim = std::nextafter(T(1), T(0));
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
      T v = std::tanh(x[i]);
      if (v > lim) v = lim;
      if (v < -lim) v = -lim;
      y[i] = v;
    }
    cached_y = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    require_shape(dy, cached_y.shape(), "tanh backward");
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i)
      dx[i] = dy[i] * (T(1) - cached_y[i] * cached_y[i]);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Embedding: lookup table (K, dim), gradient scatter-added by row.
// ---------------------------------------------------------------------------

template <typename T>
struct EmbeddingT {
  int64_t count = 0, dim = 0;
  Tensor<T> table, grad_table;
  std::vector<int> cached_ids;

  EmbeddingT() = default;
  EmbeddingT(int64_t k, int64_t d)
      : count(k), dim(d), table({k, d}), grad_table({k, d}) {}

  Tensor<T> forward(const std::vector<int>& ids) {
    Tensor<T> out({static_cast<int64_t>(ids.size()), dim});
    for (size_t b = 0; b < ids.size(); ++b) {
      const int id = ids[b];
      if (id < 0 || id >= count) throw DomainError("embedding: id out of range");
      const T* src = table.data() + static_cast<int64_t>(id) * dim;
      T* dst = out.data() + static_cast<int64_t>(b) * dim;
      for (int64_t i = 0; i < dim; ++i) dst[i] = src[i];
    }
    cached_ids = ids;
    return out;
  }

  void backward(const Tensor<T>& grad_out) {
    require_shape(grad_out, {static_cast<int64_t>(cached_ids.size()), dim},
                  "embedding backward");
    for (size_t b = 0; b < cached_ids.size(); ++b) {
      T* dst = grad_table.data() + static_cast<int64_t>(cached_ids[b]) * dim;
      const T* src = grad_out.data() + static_cast<int64_t>(b) * dim;
      for (int64_t i = 0; i < dim; ++i) dst[i] += src[i];
    }
  }

  void zero_grad() { grad_table.zero(); }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".table", &table, &grad_table});
  }
};

}  // namespace xlat::nn
