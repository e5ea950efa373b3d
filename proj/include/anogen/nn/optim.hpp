#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anogen/nn/network.hpp"
#include "anogen/rng.hpp"

namespace anogen::nn {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

// One bias-corrected Adam update of every parameter in `params` using its
// accumulated gradient. Moment buffers are created on the first step.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, double lr) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->dims());
      state.v.emplace_back(p.value->dims());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    require_shape(*p.grad, p.value->dims(), "adam_step gradient " + p.name);
    require_shape(state.m[k], p.value->dims(), "adam_step first moment " + p.name);
    require_shape(state.v[k], p.value->dims(), "adam_step second moment " + p.name);
    if (!p.grad->all_finite()) throw NumericalError("adam_step: non-finite gradient for " + p.name);
  }

  ++state.t;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* w = params[k].value->data();
    const T* g = params[k].grad->data();
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    const std::size_t n = params[k].value->size();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps));
    }
  }
}

// Adam bound to a network: applies the update and invalidates caches.
template <typename T>
void adam_step(Network<T>& net, AdamState<T>& state, double lr) {
  const auto params = net.params();
  adam_step<T>(std::span<const ParamRef<T>>(params), state, lr);
  net.mark_updated();
}

inline constexpr double kInitStddev = 0.02;

// Conv/Linear weights ~ N(0, 0.02^2) drawn in parameter order from
// Rng(seed); biases 0; InstanceNorm scale 1 and shift 0.
template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : net.params()) {
    const auto dot = p.name.rfind('.');
    const std::string leaf = p.name.substr(dot + 1);
    if (leaf == "weight") {
      for (auto& w : p.value->values()) w = static_cast<T>(rng.normal(0.0, kInitStddev));
    } else if (leaf == "scale") {
      p.value->fill(T{1});
    } else {
      p.value->fill(T{0});
    }
    p.grad->fill(T{0});
  }
  net.mark_updated();
}

}  // namespace anogen::nn
