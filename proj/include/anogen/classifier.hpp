#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anogen/imaging.hpp"
#include "anogen/nn/network.hpp"
#include "anogen/oversampling.hpp"
#include "anogen/rng.hpp"

namespace anogen {

struct MlpConfig {
  std::vector<std::size_t> hidden_sizes{100, 20};
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Linear+ReLU per hidden size, then Linear(->1)+Sigmoid. Inputs are
// flattened images scaled to [0,1].
struct TrainedMlp {
  nn::Network<float> network;
  std::vector<double> epoch_losses;  // mean binary cross-entropy per epoch
};

template <typename T = float>
nn::Network<T> build_mlp(const std::vector<std::size_t>& hidden_sizes, std::size_t inputs = kImagePixels) {
  std::vector<nn::Layer<T>> layers;
  std::size_t in = inputs;
  for (const auto h : hidden_sizes) {
    layers.emplace_back(nn::Linear<T>(in, h));
    layers.emplace_back(nn::ReLU<T>{});
    in = h;
  }
  layers.emplace_back(nn::Linear<T>(in, 1));
  layers.emplace_back(nn::Sigmoid<T>{});
  return nn::Network<T>(std::move(layers));
}

// Glorot-uniform weights, U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
// and zero biases.
template <typename T = float>
void init_mlp(nn::Network<T>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : net.params()) {
    if (p.name.ends_with("weight")) {
      const auto& d = p.value->dims();
      const double bound = std::sqrt(6.0 / static_cast<double>(d[0] + d[1]));
      for (auto& w : p.value->values()) w = static_cast<T>(bound * (2.0 * rng.uniform() - 1.0));
    } else {
      p.value->fill(T{0});
    }
    p.grad->fill(T{0});
  }
  net.mark_updated();
}

// Flattened p/255 pixels, shape [N, 1024].
nn::Tensor<float> to_batch(std::span<const TraceImage> images);

// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, and its
// gradient with respect to the logits. Computed from logits for stability.
double bce_with_logits(const nn::Tensor<float>& logits, std::span<const float> targets, nn::Tensor<float>* grad);

// Adam (beta1 0.9, beta2 0.999) on mini-batches, reshuffled each epoch by a
// seeded Rng. Throws DataError unless both classes are present.
TrainedMlp train_mlp(std::span<const TraceImage> images, const MlpConfig& cfg);
TrainedMlp train_mlp(const BalancedSet& data, const MlpConfig& cfg);

std::vector<double> predict_scores(const TrainedMlp& model, std::span<const TraceImage> images);

// Anomaly iff score >= threshold.
std::vector<Label> predict_labels(const TrainedMlp& model, std::span<const TraceImage> images, double threshold);
std::vector<Label> labels_from_scores(std::span<const double> scores, double threshold);

void save_mlp(const TrainedMlp& model, const std::filesystem::path& path);
TrainedMlp load_mlp(const std::filesystem::path& path);

}  // namespace anogen
