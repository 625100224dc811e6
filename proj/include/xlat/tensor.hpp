#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "xlat/errors.hpp"

namespace xlat {

/// Dense row-major tensor owning contiguous storage. All layout conventions
/// in this codebase are NCHW for images, (out, in) for dense weights.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), T(0));
  }

  Tensor(std::initializer_list<int64_t> shape)
      : Tensor(std::vector<int64_t>(shape)) {}

  static Tensor full(std::vector<int64_t> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * dim(1) + j)]; }
  const T& at2(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * dim(1) + j)];
  }

  T& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((b * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  const T& at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((b * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  /// Reinterprets the shape; element count must be preserved.
  void reshape(std::vector<int64_t> new_shape) {
    if (count(new_shape) != numel()) {
      throw ContractError("reshape: element count mismatch (" + shape_str(shape_) +
                          " -> " + shape_str(new_shape) + ")");
    }
    shape_ = std::move(new_shape);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw ContractError("tensor dimension must be nonnegative");
      n *= d;
    }
    return n;
  }

  static std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int64_t>& shape,
                   const char* what) {
  if (t.shape() != shape) {
    throw ContractError(std::string(what) + ": expected shape " +
                        Tensor<T>::shape_str(shape) + ", got " +
                        Tensor<T>::shape_str(t.shape()));
  }
}

}  // namespace xlat
