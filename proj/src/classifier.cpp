#include "anogen/classifier.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "anogen/agck.hpp"
#include "anogen/errors.hpp"
#include "anogen/nn/optim.hpp"
#include "anogen/rng.hpp"

namespace anogen {

using nn::Tensor;

void MlpConfig::validate() const {
  for (const auto h : hidden_sizes) {
    if (h == 0) throw std::invalid_argument("mlp.hidden_sizes: sizes must be positive");
  }
  if (batch_size == 0) throw std::invalid_argument("mlp.batch_size: must be positive");
  if (!(lr > 0)) throw std::invalid_argument("mlp.lr: must be positive");
  if (!(threshold > 0 && threshold < 1)) throw std::invalid_argument("mlp.threshold: must lie in (0,1)");
}

Tensor<float> to_batch(std::span<const TraceImage> images) {
  if (images.empty()) throw DataError("to_batch: no images");
  Tensor<float> out({images.size(), kImagePixels});
  for (std::size_t n = 0; n < images.size(); ++n) {
    for (std::size_t i = 0; i < kImagePixels; ++i) {
      out[n * kImagePixels + i] = static_cast<float>(images[n].pixels[i] / 255.0);
    }
  }
  return out;
}

double bce_with_logits(const Tensor<float>& logits, std::span<const float> targets, Tensor<float>* grad) {
  if (logits.size() != targets.size()) throw ShapeError("bce_with_logits: logits and targets differ in length");
  const auto n = static_cast<double>(logits.size());
  if (grad) *grad = Tensor<float>(logits.dims());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = targets[i];
    // softplus(z) - y z, written to avoid overflow.
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (grad) {
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      (*grad)[i] = static_cast<float>((p - y) / n);
    }
  }
  return total / n;
}

TrainedMlp train_mlp(std::span<const TraceImage> images, const MlpConfig& cfg) {
  cfg.validate();
  std::size_t anomalies = 0;
  for (const auto& img : images) anomalies += img.label == Label::Anomaly;
  if (anomalies == 0 || anomalies == images.size()) {
    throw DataError("train_mlp: training data must contain both classes");
  }

  TrainedMlp model{build_mlp(cfg.hidden_sizes), {}};
  init_mlp(model.network, derive_seed(cfg.seed, "mlp-init"));
  const std::size_t logit_layers = model.network.size() - 1;  // everything but the Sigmoid

  const Tensor<float> all = to_batch(images);
  std::vector<float> targets(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) targets[i] = images[i].label == Label::Anomaly ? 1.0f : 0.0f;

  nn::AdamState<float> opt;
  Rng rng(derive_seed(cfg.seed, "mlp-shuffle"));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      Tensor<float> batch({b, kImagePixels});
      std::vector<float> y(b);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t src = order[start + r];
        std::copy_n(all.data() + src * kImagePixels, kImagePixels, batch.data() + r * kImagePixels);
        y[r] = targets[src];
      }
      auto fwd = model.network.forward(batch, logit_layers);
      Tensor<float> grad;
      loss_sum += bce_with_logits(fwd.output, y, &grad) * static_cast<double>(b);
      model.network.zero_grads();
      model.network.backward(fwd.cache, grad);
      nn::adam_step(model.network, opt, cfg.lr);
    }
    model.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return model;
}

TrainedMlp train_mlp(const BalancedSet& data, const MlpConfig& cfg) { return train_mlp(data.images, cfg); }

std::vector<double> predict_scores(const TrainedMlp& model, std::span<const TraceImage> images) {
  std::vector<double> scores;
  scores.reserve(images.size());
  const std::size_t logit_layers = model.network.size() - 1;
  constexpr std::size_t kChunk = 256;
  // Sigmoid evaluated in double and kept strictly inside (0,1).
  constexpr double lo = 0x1.0p-60, hi = 1.0 - 0x1.0p-53;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto chunk = images.subspan(start, std::min(kChunk, images.size() - start));
    const auto logits = model.network.forward(to_batch(chunk), logit_layers).output;
    for (const float z : logits.values()) {
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-static_cast<double>(z)))
                              : std::exp(static_cast<double>(z)) / (1.0 + std::exp(static_cast<double>(z)));
      scores.push_back(std::clamp(p, lo, hi));
    }
  }
  return scores;
}

std::vector<Label> labels_from_scores(std::span<const double> scores, double threshold) {
  std::vector<Label> out;
  out.reserve(scores.size());
  for (const double s : scores) out.push_back(s >= threshold ? Label::Anomaly : Label::Normal);
  return out;
}

std::vector<Label> predict_labels(const TrainedMlp& model, std::span<const TraceImage> images, double threshold) {
  const auto scores = predict_scores(model, images);
  return labels_from_scores(scores, threshold);
}

void save_mlp(const TrainedMlp& model, const std::filesystem::path& path) {
  AgckFile file;
  file.config.emplace_back("kind", "mlp");
  std::string hidden;
  for (const auto& layer : model.network.layers()) {
    if (const auto* lin = std::get_if<nn::Linear<float>>(&layer); lin && lin->out_features != 1) {
      if (!hidden.empty()) hidden += ",";
      hidden += std::to_string(lin->out_features);
    }
  }
  file.config.emplace_back("mlp.hidden_sizes", hidden);
  file.config.emplace_back("mlp.epochs_trained", std::to_string(model.epoch_losses.size()));
  for (const auto& p : model.network.params()) file.tensors.emplace_back(p.name, *p.value);
  if (!model.epoch_losses.empty()) {
    std::vector<float> losses(model.epoch_losses.begin(), model.epoch_losses.end());
    const std::size_t n = losses.size();
    file.tensors.emplace_back("epoch_losses", Tensor<float>({n}, std::move(losses)));
  }
  write_agck(file, path);
}

TrainedMlp load_mlp(const std::filesystem::path& path) {
  const AgckFile file = read_agck(path);
  if (file.require("kind") != "mlp") throw FormatError("config.kind", "not an MLP model file");
  std::vector<std::size_t> hidden;
  const std::string& spec = file.require("mlp.hidden_sizes");
  std::size_t pos = 0;
  while (pos < spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string tok = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      hidden.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw FormatError("config.mlp.hidden_sizes", "bad size '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  TrainedMlp model{build_mlp(hidden), {}};
  for (auto& p : model.network.params()) {
    const Tensor<float>* t = file.find_tensor(p.name);
    if (!t) throw FormatError("tensor '" + p.name + "'", "missing from model file");
    if (t->dims() != p.value->dims()) {
      throw FormatError("tensor '" + p.name + "'", "shape mismatch: file has " + nn::shape_string(t->dims()) +
                                                     ", model expects " + nn::shape_string(p.value->dims()));
    }
    *p.value = *t;
  }
  model.network.mark_updated();
  if (const auto* losses = file.find_tensor("epoch_losses")) {
    model.epoch_losses.assign(losses->values().begin(), losses->values().end());
  }
  return model;
}

}  // namespace anogen
