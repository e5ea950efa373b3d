#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "anogen/nn/tensor.hpp"

// Layer catalog. Every layer works on a single instance: convolutional
// layers take [C,H,W], Linear takes [in] or a batch [N,in]. Forward passes
// are const and write what backward needs into a LayerCache, so one layer
// can be run several times before any backward call. Backward returns the
// input gradient and, when asked, accumulates parameter gradients into
// Param::grad (callers zero them).

namespace anogen::nn {

template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  explicit Param(Shape dims, T fill = T{0}) : value(dims, fill), grad(dims) {}
};

template <typename T>
struct LayerCache {
  Shape in_dims;
  Shape out_dims;
  std::vector<Tensor<T>> tensors;
  std::vector<LayerCache> children;
};

enum class PaddingMode { Zero, Reflect };

namespace detail {

inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= m) return static_cast<std::size_t>(2 * m - 2 - i);
  return static_cast<std::size_t>(i);
}

template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t p, PaddingMode mode) {
  if (p == 0) return x;
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<T> out({C, H + 2 * p, W + 2 * p});
  const auto sp = static_cast<std::ptrdiff_t>(p);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H + 2 * p; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y) - sp;
      if (mode == PaddingMode::Zero && (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H))) continue;
      const std::size_t ry = reflect_index(sy, H);
      for (std::size_t xx = 0; xx < W + 2 * p; ++xx) {
        const auto sx = static_cast<std::ptrdiff_t>(xx) - sp;
        if (mode == PaddingMode::Zero && (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))) continue;
        out.at(c, y, xx) = x.at(c, ry, reflect_index(sx, W));
      }
    }
  }
  return out;
}

// Adjoint of pad(): folds a gradient over the padded plane back onto the
// unpadded input.
template <typename T>
Tensor<T> unpad_grad(const Tensor<T>& dp, std::size_t p, PaddingMode mode, const Shape& in_dims) {
  if (p == 0) return dp;
  const std::size_t C = in_dims[0], H = in_dims[1], W = in_dims[2];
  Tensor<T> dx(in_dims);
  const auto sp = static_cast<std::ptrdiff_t>(p);
  if (mode == PaddingMode::Zero) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) dx.at(c, y, xx) = dp.at(c, y + p, xx + p);
    return dx;
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H + 2 * p; ++y) {
      const std::size_t ry = reflect_index(static_cast<std::ptrdiff_t>(y) - sp, H);
      for (std::size_t xx = 0; xx < W + 2 * p; ++xx) {
        dx.at(c, ry, reflect_index(static_cast<std::ptrdiff_t>(xx) - sp, W)) += dp.at(c, y, xx);
      }
    }
  }
  return dx;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> mat(T* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
template <typename T>
Eigen::Map<const RowMat<T>> cmat(const T* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

// Unfolds k x k patches of a [C,H,W] plane (already padded) into a
// [C*k*k, Ho*Wo] matrix.
template <typename T>
void im2col(const T* src, std::size_t C, std::size_t H, std::size_t W, std::size_t K, std::size_t s, std::size_t Ho,
            std::size_t Wo, T* cols) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        T* row = cols + ((c * K + ky) * K + kx) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const T* in = src + (c * H + oy * s + ky) * W + kx;
          T* dst = row + oy * Wo;
          if (s == 1) {
            std::copy_n(in, Wo, dst);
          } else {
            for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox] = in[ox * s];
          }
        }
      }
}

// Adjoint of im2col: accumulates the columns back onto the plane.
template <typename T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t K, std::size_t s, std::size_t Ho,
            std::size_t Wo, T* dst) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        const T* row = cols + ((c * K + ky) * K + kx) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          T* out = dst + (c * H + oy * s + ky) * W + kx;
          const T* in = row + oy * Wo;
          if (s == 1) {
#pragma omp simd
            for (std::size_t ox = 0; ox < Wo; ++ox) out[ox] += in[ox];
          } else {
            for (std::size_t ox = 0; ox < Wo; ++ox) out[ox * s] += in[ox];
          }
        }
      }
}

template <typename T>
void require_rank3(const Shape& in, std::size_t channels, std::string_view kind) {
  if (in.size() != 3 || in[0] != channels) {
    throw ShapeError(std::string(kind) + ": expected [" + std::to_string(channels) + ",H,W], got " +
                     shape_string(in));
  }
}

template <typename T>
void require_grad_shape(const LayerCache<T>& cache, const Tensor<T>& dy, std::string_view kind) {
  if (dy.dims() != cache.out_dims) {
    throw ShapeError(std::string(kind) + " backward: output gradient " + shape_string(dy.dims()) +
                     " does not match cached output " + shape_string(cache.out_dims));
  }
}

}  // namespace detail

// Cross-correlation with bias. Weight layout [out, in, k, k].
template <typename T>
struct Conv2d {
  static constexpr std::string_view kind = "Conv2d";

  std::size_t in_ch = 0, out_ch = 0, kernel = 1, stride = 1, padding = 0;
  PaddingMode padding_mode = PaddingMode::Zero;
  Param<T> weight, bias;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p,
         PaddingMode mode = PaddingMode::Zero)
      : in_ch(in), out_ch(out), kernel(k), stride(s), padding(p), padding_mode(mode),
        weight({out, in, k, k}), bias({out}) {}

  Shape output_shape(const Shape& in) const {
    detail::require_rank3<T>(in, in_ch, kind);
    if (padding_mode == PaddingMode::Reflect && (padding >= in[1] || padding >= in[2])) {
      throw ShapeError("Conv2d: reflect padding " + std::to_string(padding) + " needs input larger than " +
                       shape_string(in));
    }
    const std::size_t hp = in[1] + 2 * padding, wp = in[2] + 2 * padding;
    if (hp < kernel || wp < kernel) throw ShapeError("Conv2d: kernel larger than padded input " + shape_string(in));
    return {out_ch, (hp - kernel) / stride + 1, (wp - kernel) / stride + 1};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache) const {
    const Shape od = output_shape(x.dims());
    const Tensor<T> p = detail::pad(x, padding, padding_mode);
    const std::size_t HW = od[1] * od[2], KK = in_ch * kernel * kernel;
    Tensor<T> cols({KK, HW});
    detail::im2col(p.data(), in_ch, p.dim(1), p.dim(2), kernel, stride, od[1], od[2], cols.data());
    Tensor<T> out(od);
    auto o = detail::mat(out.data(), out_ch, HW);
    o.noalias() = detail::cmat(weight.value.data(), out_ch, KK) * detail::cmat(cols.data(), KK, HW);
    for (std::size_t oc = 0; oc < out_ch; ++oc) o.row(oc).array() += bias.value[oc];
    cache.in_dims = x.dims();
    cache.out_dims = od;
    cache.tensors = {std::move(cols)};
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, bool param_grads) {
    detail::require_grad_shape(cache, dy, kind);
    const Tensor<T>& cols = cache.tensors.at(0);
    const std::size_t Ho = dy.dim(1), Wo = dy.dim(2), HW = Ho * Wo, KK = in_ch * kernel * kernel;
    const auto g = detail::cmat(dy.data(), out_ch, HW);
    if (param_grads) {
      detail::mat(weight.grad.data(), out_ch, KK).noalias() += g * detail::cmat(cols.data(), KK, HW).transpose();
      for (std::size_t oc = 0; oc < out_ch; ++oc) bias.grad[oc] += g.row(oc).sum();
    }
    Tensor<T> dcols({KK, HW});
    detail::mat(dcols.data(), KK, HW).noalias() = detail::cmat(weight.value.data(), out_ch, KK).transpose() * g;
    const std::size_t Hp = cache.in_dims[1] + 2 * padding, Wp = cache.in_dims[2] + 2 * padding;
    Tensor<T> dp({in_ch, Hp, Wp});
    detail::col2im(dcols.data(), in_ch, Hp, Wp, kernel, stride, Ho, Wo, dp.data());
    return detail::unpad_grad(dp, padding, padding_mode, cache.in_dims);
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f("weight", weight);
    f("bias", bias);
  }
};

// Fractionally strided convolution (adjoint of a strided Conv2d), zero
// padded, with output_padding added on the bottom/right edge.
// Weight layout [in, out, k, k].
template <typename T>
struct TransposedConv2d {
  static constexpr std::string_view kind = "TransposedConv2d";

  std::size_t in_ch = 0, out_ch = 0, kernel = 1, stride = 1, padding = 0, output_padding = 0;
  Param<T> weight, bias;

  TransposedConv2d() = default;
  TransposedConv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p, std::size_t op)
      : in_ch(in), out_ch(out), kernel(k), stride(s), padding(p), output_padding(op), weight({in, out, k, k}),
        bias({out}) {}

  Shape output_shape(const Shape& in) const {
    detail::require_rank3<T>(in, in_ch, kind);
    const std::size_t hf = (in[1] - 1) * stride + kernel + output_padding;
    const std::size_t wf = (in[2] - 1) * stride + kernel + output_padding;
    if (hf <= 2 * padding || wf <= 2 * padding) throw ShapeError("TransposedConv2d: padding too large");
    return {out_ch, hf - 2 * padding, wf - 2 * padding};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache) const {
    const Shape od = output_shape(x.dims());
    const std::size_t H = x.dim(1), W = x.dim(2), K = kernel, s = stride, KK = out_ch * K * K;
    const std::size_t Hf = (H - 1) * s + K + output_padding, Wf = (W - 1) * s + K + output_padding;
    Tensor<T> cols({KK, H * W});
    detail::mat(cols.data(), KK, H * W).noalias() =
        detail::cmat(weight.value.data(), in_ch, KK).transpose() * detail::cmat(x.data(), in_ch, H * W);
    Tensor<T> full({out_ch, Hf, Wf});
    detail::col2im(cols.data(), out_ch, Hf, Wf, K, s, H, W, full.data());
    Tensor<T> out(od);
    for (std::size_t oc = 0; oc < out_ch; ++oc)
      for (std::size_t y = 0; y < od[1]; ++y)
        for (std::size_t xx = 0; xx < od[2]; ++xx)
          out.at(oc, y, xx) = full.at(oc, y + padding, xx + padding) + bias.value[oc];
    cache.in_dims = x.dims();
    cache.out_dims = od;
    cache.tensors = {x};
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, bool param_grads) {
    detail::require_grad_shape(cache, dy, kind);
    const Tensor<T>& x = cache.tensors.at(0);
    const std::size_t H = x.dim(1), W = x.dim(2), K = kernel, s = stride, KK = out_ch * K * K;
    const std::size_t Hf = (H - 1) * s + K + output_padding, Wf = (W - 1) * s + K + output_padding;
    Tensor<T> dfull({out_ch, Hf, Wf});
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
      T acc_b = 0;
      for (std::size_t y = 0; y < dy.dim(1); ++y)
        for (std::size_t xx = 0; xx < dy.dim(2); ++xx) {
          const T g = dy.at(oc, y, xx);
          dfull.at(oc, y + padding, xx + padding) = g;
          acc_b += g;
        }
      if (param_grads) bias.grad[oc] += acc_b;
    }
    Tensor<T> cols({KK, H * W});
    detail::im2col(dfull.data(), out_ch, Hf, Wf, K, s, H, W, cols.data());
    const auto c = detail::cmat(cols.data(), KK, H * W);
    if (param_grads) {
      detail::mat(weight.grad.data(), in_ch, KK).noalias() += detail::cmat(x.data(), in_ch, H * W) * c.transpose();
    }
    Tensor<T> dx(x.dims());
    detail::mat(dx.data(), in_ch, H * W).noalias() = detail::cmat(weight.value.data(), in_ch, KK) * c;
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f("weight", weight);
    f("bias", bias);
  }
};

// Per-plane standardization followed by a per-channel affine map.
template <typename T>
struct InstanceNorm {
  static constexpr std::string_view kind = "InstanceNorm";

  std::size_t channels = 0;
  double eps = 1e-5;
  Param<T> scale, shift;

  InstanceNorm() = default;
  explicit InstanceNorm(std::size_t c, double e = 1e-5) : channels(c), eps(e), scale({c}, T{1}), shift({c}) {
    if (!(eps > 0)) throw ShapeError("InstanceNorm: eps must be positive");
  }

  Shape output_shape(const Shape& in) const {
    detail::require_rank3<T>(in, channels, kind);
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache) const {
    const Shape od = output_shape(x.dims());
    const std::size_t n = x.dim(1) * x.dim(2);
    Tensor<T> xhat(od), inv_std({channels}), out(od);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = x.data() + c * n;
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) sum += src[i];
      const double mean = sum / static_cast<double>(n);
      double sq = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
      const double inv = 1.0 / std::sqrt(sq / static_cast<double>(n) + eps);
      inv_std[c] = static_cast<T>(inv);
      T* xh = xhat.data() + c * n;
      T* dst = out.data() + c * n;
      const T g = scale.value[c], b = shift.value[c];
      for (std::size_t i = 0; i < n; ++i) {
        xh[i] = static_cast<T>((src[i] - mean) * inv);
        dst[i] = g * xh[i] + b;
      }
    }
    cache.in_dims = od;
    cache.out_dims = od;
    cache.tensors = {std::move(xhat), std::move(inv_std)};
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, bool param_grads) {
    detail::require_grad_shape(cache, dy, kind);
    const Tensor<T>& xhat = cache.tensors.at(0);
    const Tensor<T>& inv_std = cache.tensors.at(1);
    const std::size_t n = dy.dim(1) * dy.dim(2);
    Tensor<T> dx(dy.dims());
    for (std::size_t c = 0; c < channels; ++c) {
      const T* g = dy.data() + c * n;
      const T* xh = xhat.data() + c * n;
      double sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g[i];
        sum_gx += static_cast<double>(g[i]) * xh[i];
      }
      if (param_grads) {
        scale.grad[c] += static_cast<T>(sum_gx);
        shift.grad[c] += static_cast<T>(sum_g);
      }
      // With dxhat = gamma * dy:
      // dx = inv/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
      const double gamma = scale.value[c];
      const double k = gamma * inv_std[c] / static_cast<double>(n);
      T* d = dx.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = static_cast<T>(k * (static_cast<double>(n) * g[i] - sum_g - xh[i] * sum_gx));
      }
    }
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("scale", scale);
    f("shift", shift);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f("scale", scale);
    f("shift", shift);
  }
};

namespace detail {

// Shared plumbing for parameter-free elementwise activations. `Op` supplies
// value(x) and derivative(x, y); `keep_output` picks whether the cache holds
// the input or the output.
template <typename T, typename Op>
struct Elementwise {
  Shape output_shape(const Shape& in) const { return in; }

  template <typename Self>
  static Tensor<T> run_forward(const Self& self, const Tensor<T>& x, LayerCache<T>& cache) {
    Tensor<T> out(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = self.value(x[i]);
    cache.in_dims = x.dims();
    cache.out_dims = x.dims();
    cache.tensors = {Op::keep_output ? out : x};
    return out;
  }

  template <typename Self>
  static Tensor<T> run_backward(const Self& self, const LayerCache<T>& cache, const Tensor<T>& dy) {
    require_grad_shape(cache, dy, Op::kind);
    const Tensor<T>& kept = cache.tensors.at(0);
    Tensor<T> dx(dy.dims());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * self.derivative(kept[i]);
    return dx;
  }

  template <typename F>
  void for_each_param(F&&) {}
  template <typename F>
  void for_each_param(F&&) const {}
};

}  // namespace detail

template <typename T>
struct ReLU : detail::Elementwise<T, ReLU<T>> {
  static constexpr std::string_view kind = "ReLU";
  static constexpr bool keep_output = false;
  T value(T x) const { return x > 0 ? x : T{0}; }
  T derivative(T x) const { return x > 0 ? T{1} : T{0}; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& c) const { return this->run_forward(*this, x, c); }
  Tensor<T> backward(const LayerCache<T>& c, const Tensor<T>& dy, bool) { return this->run_backward(*this, c, dy); }
};

template <typename T>
struct LeakyReLU : detail::Elementwise<T, LeakyReLU<T>> {
  static constexpr std::string_view kind = "LeakyReLU";
  static constexpr bool keep_output = false;
  T slope = T(0.2);
  LeakyReLU() = default;
  explicit LeakyReLU(T s) : slope(s) {}
  T value(T x) const { return x > 0 ? x : slope * x; }
  T derivative(T x) const { return x > 0 ? T{1} : slope; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& c) const { return this->run_forward(*this, x, c); }
  Tensor<T> backward(const LayerCache<T>& c, const Tensor<T>& dy, bool) { return this->run_backward(*this, c, dy); }
};

template <typename T>
struct Tanh : detail::Elementwise<T, Tanh<T>> {
  static constexpr std::string_view kind = "Tanh";
  static constexpr bool keep_output = true;
  T value(T x) const { return std::tanh(x); }
  T derivative(T y) const { return T{1} - y * y; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& c) const { return this->run_forward(*this, x, c); }
  Tensor<T> backward(const LayerCache<T>& c, const Tensor<T>& dy, bool) { return this->run_backward(*this, c, dy); }
};

template <typename T>
struct Sigmoid : detail::Elementwise<T, Sigmoid<T>> {
  static constexpr std::string_view kind = "Sigmoid";
  static constexpr bool keep_output = true;
  T value(T x) const {
    // Split by sign so exp never overflows.
    if (x >= 0) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
  }
  T derivative(T y) const { return y * (T{1} - y); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& c) const { return this->run_forward(*this, x, c); }
  Tensor<T> backward(const LayerCache<T>& c, const Tensor<T>& dy, bool) { return this->run_backward(*this, c, dy); }
};

// x + IN(Conv3x3(ReLU(IN(Conv3x3(x))))), reflect padded.
template <typename T>
struct ResidualBlock {
  static constexpr std::string_view kind = "ResidualBlock";

  std::size_t channels = 0;
  Conv2d<T> conv1, conv2;
  InstanceNorm<T> norm1, norm2;
  ReLU<T> relu;

  ResidualBlock() = default;
  explicit ResidualBlock(std::size_t c)
      : channels(c), conv1(c, c, 3, 1, 1, PaddingMode::Reflect), conv2(c, c, 3, 1, 1, PaddingMode::Reflect),
        norm1(c), norm2(c) {}

  Shape output_shape(const Shape& in) const {
    detail::require_rank3<T>(in, channels, kind);
    return conv1.output_shape(in);
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache) const {
    const Shape od = output_shape(x.dims());
    cache.children.assign(5, LayerCache<T>{});
    Tensor<T> h = conv1.forward(x, cache.children[0]);
    h = norm1.forward(h, cache.children[1]);
    h = relu.forward(h, cache.children[2]);
    h = conv2.forward(h, cache.children[3]);
    h = norm2.forward(h, cache.children[4]);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
    cache.in_dims = x.dims();
    cache.out_dims = od;
    return h;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, bool param_grads) {
    detail::require_grad_shape(cache, dy, kind);
    Tensor<T> g = norm2.backward(cache.children.at(4), dy, param_grads);
    g = conv2.backward(cache.children.at(3), g, param_grads);
    g = relu.backward(cache.children.at(2), g, param_grads);
    g = norm1.backward(cache.children.at(1), g, param_grads);
    g = conv1.backward(cache.children.at(0), g, param_grads);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    return g;
  }

  template <typename F>
  void for_each_param(F&& f) {
    auto sub = [&f](std::string_view p, auto& layer) {
      layer.for_each_param([&](std::string_view n, auto& prm) { f(std::string(p) + "." + std::string(n), prm); });
    };
    sub("conv1", conv1);
    sub("norm1", norm1);
    sub("conv2", conv2);
    sub("norm2", norm2);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    auto sub = [&f](std::string_view p, const auto& layer) {
      layer.for_each_param([&](std::string_view n, const auto& prm) { f(std::string(p) + "." + std::string(n), prm); });
    };
    sub("conv1", conv1);
    sub("norm1", norm1);
    sub("conv2", conv2);
    sub("norm2", norm2);
  }
};

// y = W x + b, weight layout [out, in]. Accepts [in] or a batch [N, in].
template <typename T>
struct Linear {
  static constexpr std::string_view kind = "Linear";

  std::size_t in_features = 0, out_features = 0;
  Param<T> weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : in_features(in), out_features(out), weight({out, in}), bias({out}) {}

  Shape output_shape(const Shape& in) const {
    if (in.size() == 1 && in[0] == in_features) return {out_features};
    if (in.size() == 2 && in[1] == in_features) return {in[0], out_features};
    throw ShapeError("Linear: expected [" + std::to_string(in_features) + "] or [N," + std::to_string(in_features) +
                     "], got " + shape_string(in));
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache) const {
    const Shape od = output_shape(x.dims());
    const std::size_t N = x.size() / in_features, I = in_features, O = out_features;
    Tensor<T> out(od);
    // One matrix-vector product per row keeps each row's result independent of the batch.
    const auto w = detail::cmat(weight.value.data(), O, I);
    const auto b = detail::cmat(bias.value.data(), O, 1);
    for (std::size_t n = 0; n < N; ++n) {
      auto o = detail::mat(out.data() + n * O, O, 1);
      o.noalias() = w * detail::cmat(x.data() + n * I, I, 1);
      o += b;
    }
    cache.in_dims = x.dims();
    cache.out_dims = od;
    cache.tensors = {x};
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, bool param_grads) {
    detail::require_grad_shape(cache, dy, kind);
    const Tensor<T>& x = cache.tensors.at(0);
    const std::size_t N = x.size() / in_features, I = in_features, O = out_features;
    const auto g = detail::cmat(dy.data(), N, O);
    Tensor<T> dx(x.dims());
    detail::mat(dx.data(), N, I).noalias() = g * detail::cmat(weight.value.data(), O, I);
    if (param_grads) {
      detail::mat(weight.grad.data(), O, I).noalias() += g.transpose() * detail::cmat(x.data(), N, I);
      detail::mat(bias.grad.data(), 1, O).row(0) += g.colwise().sum();
    }
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f("weight", weight);
    f("bias", bias);
  }
};

}  // namespace anogen::nn
