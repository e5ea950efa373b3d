#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "anogen/errors.hpp"

namespace anogen::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

// Dense row-major n-d array. Value type; copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T{0}) : dims_(std::move(dims)), data_(shape_size(dims_), fill) {
    check_dims();
  }

  Tensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(dims_));
    }
  }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] indexing.
  T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * dims_[1] + y) * dims_[2] + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Same data, new shape of identical element count.
  Tensor reshaped(Shape dims) const { return Tensor(std::move(dims), data_); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

 private:
  void check_dims() const {
    for (const auto d : dims_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(dims_));
    }
  }

  Shape dims_;
  std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expected, const std::string& what) {
  if (t.dims() != expected) {
    throw ShapeError(what + ": expected " + shape_string(expected) + ", got " + shape_string(t.dims()));
  }
}

}  // namespace anogen::nn
