#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "anogen/nn/layers.hpp"

namespace anogen::nn {

template <typename T>
using Layer = std::variant<Conv2d<T>, TransposedConv2d<T>, InstanceNorm<T>, ReLU<T>, LeakyReLU<T>, Tanh<T>,
                           Sigmoid<T>, ResidualBlock<T>, Linear<T>>;

template <typename T>
std::string_view layer_kind(const Layer<T>& layer) {
  return std::visit([](const auto& l) -> std::string_view { return l.kind; }, layer);
}

// Mutable view of one named parameter and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
struct ConstParamRef {
  std::string name;
  const Tensor<T>* value;
};

// Everything backward() needs from one forward() call. Tied to the network
// instance and parameter version that produced it.
template <typename T>
struct NetworkCache {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<LayerCache<T>> layers;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  NetworkCache<T> cache;
};

namespace detail {
inline std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Feed-forward stack of layers. Copies get a fresh identity, so caches from
// the original cannot be replayed against a copy.
template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer<T>> layers) : layers_(std::move(layers)) {}

  Network(const Network& other) : layers_(other.layers_), id_(detail::next_network_id()) {}
  Network& operator=(const Network& other) {
    if (this != &other) {
      layers_ = other.layers_;
      id_ = detail::next_network_id();
      version_ = 0;
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::size_t size() const noexcept { return layers_.size(); }
  const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
  std::vector<Layer<T>>& layers() noexcept { return layers_; }

  // Runs layers [0, count). `count` defaults to all of them.
  ForwardResult<T> forward(const Tensor<T>& input, std::size_t count = SIZE_MAX) const {
    count = std::min(count, layers_.size());
    ForwardResult<T> result;
    result.cache.network_id = id_;
    result.cache.version = version_;
    result.cache.layers.resize(count);
    Tensor<T> h = input;
    for (std::size_t i = 0; i < count; ++i) {
      try {
        h = std::visit([&](const auto& l) { return l.forward(h, result.cache.layers[i]); }, layers_[i]);
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + " (" + std::string(layer_kind(layers_[i])) + "): " + e.what());
      }
      if (!h.all_finite()) {
        throw NumericalError("non-finite activation at layer " + std::to_string(i) + " (" +
                             std::string(layer_kind(layers_[i])) + ")");
      }
    }
    result.output = std::move(h);
    return result;
  }

  Tensor<T> infer(const Tensor<T>& input) const { return forward(input).output; }

  // Reverse pass over the layers recorded in `cache`. Parameter gradients
  // are accumulated unless `param_grads` is false.
  Tensor<T> backward(const NetworkCache<T>& cache, const Tensor<T>& output_grad, bool param_grads = true) {
    if (cache.network_id != id_) throw std::logic_error("backward: cache was produced by a different network");
    if (cache.version != version_) throw std::logic_error("backward: stale cache, parameters changed since forward");
    if (cache.layers.size() > layers_.size()) throw std::logic_error("backward: cache has more layers than network");
    Tensor<T> g = output_grad;
    for (std::size_t i = cache.layers.size(); i-- > 0;) {
      g = std::visit([&](auto& l) { return l.backward(cache.layers[i], g, param_grads); }, layers_[i]);
      if (!g.all_finite()) {
        throw NumericalError("non-finite gradient at layer " + std::to_string(i) + " (" +
                             std::string(layer_kind(layers_[i])) + ")");
      }
    }
    return g;
  }

  // Parameters in a fixed order, named "<layer index>.<param>".
  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](auto& l) {
            l.for_each_param([&](std::string_view name, Param<T>& p) {
              out.push_back({std::to_string(i) + "." + std::string(name), &p.value, &p.grad});
            });
          },
          layers_[i]);
    }
    return out;
  }

  std::vector<ConstParamRef<T>> params() const {
    std::vector<ConstParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](const auto& l) {
            l.for_each_param([&](std::string_view name, const Param<T>& p) {
              out.push_back({std::to_string(i) + "." + std::string(name), &p.value});
            });
          },
          layers_[i]);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value->size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params()) p.grad->fill(T{0});
  }

  // Must be called after any in-place parameter update; invalidates caches.
  void mark_updated() noexcept { ++version_; }
  std::uint64_t version() const noexcept { return version_; }

 private:
  std::vector<Layer<T>> layers_;
  std::uint64_t id_ = detail::next_network_id();
  std::uint64_t version_ = 0;
};

}  // namespace anogen::nn
