#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anogen/imaging.hpp"
#include "anogen/nn/network.hpp"
#include "anogen/nn/optim.hpp"
#include "anogen/trace_data.hpp"

namespace anogen {

struct GanConfig {
  std::size_t residual_blocks = 6;
  std::size_t base_channels = 32;
  double lambda_cycle = 10.0;
  // Weight of the optional identity term, relative to lambda_cycle. 0 = off.
  double identity_weight = 0.0;
  std::size_t image_pool_size = 50;
  std::uint64_t total_steps = 330'000;
  std::uint64_t lr_plateau_steps = 150'000;
  std::uint64_t lr_decay_steps = 200'000;
  double lr_initial = 2e-6;
  double lr_final = 2e-7;
  std::uint64_t checkpoint_interval = 10'000;
  std::uint64_t log_interval = 10'000;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_entries() const;
  static GanConfig from_entries(const std::vector<std::pair<std::string, std::string>>& entries);

  friend bool operator==(const GanConfig&, const GanConfig&) = default;
};

inline constexpr double kGanAdamBeta1 = 0.5;
inline constexpr double kGanAdamBeta2 = 0.999;
inline constexpr double kDiscriminatorSlope = 0.2;

// G maps Normal -> Anomaly, F maps Anomaly -> Normal; D_x judges Normal
// images and D_y judges Anomaly images.
struct CycleGanModel {
  GanConfig cfg;
  nn::Network<float> G, F, Dx, Dy;
  nn::AdamState<float> opt_G, opt_F, opt_Dx, opt_Dy;
  std::uint64_t step = 0;
};

template <typename T = float>
nn::Network<T> build_generator(const GanConfig& cfg) {
  using namespace nn;
  const std::size_t b = cfg.base_channels;
  std::vector<Layer<T>> layers;
  layers.emplace_back(Conv2d<T>(1, b, 7, 1, 3, PaddingMode::Reflect));
  layers.emplace_back(InstanceNorm<T>(b));
  layers.emplace_back(ReLU<T>{});
  layers.emplace_back(Conv2d<T>(b, 2 * b, 3, 2, 1));
  layers.emplace_back(InstanceNorm<T>(2 * b));
  layers.emplace_back(ReLU<T>{});
  layers.emplace_back(Conv2d<T>(2 * b, 4 * b, 3, 2, 1));
  layers.emplace_back(InstanceNorm<T>(4 * b));
  layers.emplace_back(ReLU<T>{});
  for (std::size_t i = 0; i < cfg.residual_blocks; ++i) layers.emplace_back(ResidualBlock<T>(4 * b));
  layers.emplace_back(TransposedConv2d<T>(4 * b, 2 * b, 3, 2, 1, 1));
  layers.emplace_back(InstanceNorm<T>(2 * b));
  layers.emplace_back(ReLU<T>{});
  layers.emplace_back(TransposedConv2d<T>(2 * b, b, 3, 2, 1, 1));
  layers.emplace_back(InstanceNorm<T>(b));
  layers.emplace_back(ReLU<T>{});
  layers.emplace_back(Conv2d<T>(b, 1, 7, 1, 3, PaddingMode::Reflect));
  layers.emplace_back(Tanh<T>{});
  return Network<T>(std::move(layers));
}

template <typename T = float>
nn::Network<T> build_discriminator(const GanConfig& cfg) {
  using namespace nn;
  const std::size_t b = cfg.base_channels;
  const T slope = static_cast<T>(kDiscriminatorSlope);
  std::vector<Layer<T>> layers;
  layers.emplace_back(Conv2d<T>(1, 2 * b, 4, 2, 1));
  layers.emplace_back(LeakyReLU<T>(slope));
  layers.emplace_back(Conv2d<T>(2 * b, 4 * b, 4, 2, 1));
  layers.emplace_back(InstanceNorm<T>(4 * b));
  layers.emplace_back(LeakyReLU<T>(slope));
  layers.emplace_back(Conv2d<T>(4 * b, 8 * b, 4, 1, 1));
  layers.emplace_back(InstanceNorm<T>(8 * b));
  layers.emplace_back(LeakyReLU<T>(slope));
  layers.emplace_back(Conv2d<T>(8 * b, 1, 4, 1, 1));
  return Network<T>(std::move(layers));
}

// Fresh model with all four networks initialised from `seed`.
CycleGanModel build_model(const GanConfig& cfg, std::uint64_t seed);

// Constant lr_initial up to lr_plateau_steps, then linear decay to lr_final
// over lr_decay_steps, then constant lr_final.
double lr_at(std::uint64_t step, const GanConfig& cfg);

// Bounded history of generated images fed to the discriminators. While not
// full every query is stored and returned; once full, half the time (by the
// seeded sampler) the query replaces a random stored image and that older
// image is returned instead. Capacity 0 passes images straight through.
template <typename T>
class BasicImagePool {
 public:
  BasicImagePool(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

  nn::Tensor<T> query(const nn::Tensor<T>& image) {
    if (capacity_ == 0) return image;
    if (buffer_.size() < capacity_) {
      buffer_.push_back(image);
      return image;
    }
    if (rng_.uniform() < 0.5) {
      const auto k = rng_.uniform_index(buffer_.size());
      nn::Tensor<T> old = std::move(buffer_[k]);
      buffer_[k] = image;
      return old;
    }
    return image;
  }

  std::size_t size() const noexcept { return buffer_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<nn::Tensor<T>> buffer_;
  Rng rng_;
};

using ImagePool = BasicImagePool<float>;

struct LossRecord {
  std::uint64_t step = 0;  // completed steps after the update
  double loss_G = 0;       // adversarial G term + cycle_loss
  double loss_F = 0;       // adversarial F term + cycle_loss
  double loss_Dx = 0;
  double loss_Dy = 0;
  double cycle_loss = 0;   // lambda * (|F(G(x)) - x|_1 + |G(F(y)) - y|_1), means

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

// Least-squares adversarial loss of a patch map against a constant target,
// mean over patches.
template <typename T>
double lsgan_loss(const nn::Tensor<T>& patches, double target) {
  double s = 0;
  for (const T v : patches.values()) s += (static_cast<double>(v) - target) * (static_cast<double>(v) - target);
  return s / static_cast<double>(patches.size());
}

// Discriminator objective 1/2 [mean (D(real) - 1)^2 + mean D(fake)^2].
template <typename T>
double discriminator_loss(const nn::Tensor<T>& real_patches, const nn::Tensor<T>& fake_patches) {
  return 0.5 * (lsgan_loss(real_patches, 1.0) + lsgan_loss(fake_patches, 0.0));
}

// Mean absolute difference.
template <typename T>
double l1_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  nn::require_shape(b, a.dims(), "l1_loss");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s / static_cast<double>(a.size());
}

namespace detail {

// d/dpatches of scale * mean (patches - target)^2.
template <typename T>
nn::Tensor<T> lsgan_grad(const nn::Tensor<T>& patches, double target, double scale) {
  nn::Tensor<T> g(patches.dims());
  const double k = 2.0 * scale / static_cast<double>(patches.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(k * (patches[i] - target));
  return g;
}

// d/da of scale * mean |a - b|.
template <typename T>
nn::Tensor<T> l1_grad(const nn::Tensor<T>& a, const nn::Tensor<T>& b, double scale) {
  nn::Tensor<T> g(a.dims());
  const auto k = static_cast<T>(scale / static_cast<double>(a.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T d = a[i] - b[i];
    g[i] = d > 0 ? k : (d < 0 ? -k : T(0));
  }
  return g;
}

template <typename T>
void add_into(nn::Tensor<T>& acc, const nn::Tensor<T>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void check_loss(double v, const char* name, std::uint64_t step);

}  // namespace detail

// The four networks of a model, for any scalar type.
template <typename T>
struct GanNetworks {
  nn::Network<T>& G;
  nn::Network<T>& F;
  nn::Network<T>& Dx;
  nn::Network<T>& Dy;
};

// Forward and backward passes of one training step without the update:
// G and F hold the gradients of the joint generator objective (both
// adversarial terms, cycle_loss and the identity term, each counted once),
// D_x and D_y those of their own losses. The pools are queried as in
// training. rec.step is `step`.
template <typename T>
LossRecord compute_gradients(const GanConfig& cfg, GanNetworks<T> nets, const nn::Tensor<T>& x,
                             const nn::Tensor<T>& y, BasicImagePool<T>& pool_x, BasicImagePool<T>& pool_y,
                             std::uint64_t step) {
  using detail::add_into;
  using detail::l1_grad;
  using detail::lsgan_grad;
  auto& [G, F, Dx, Dy] = nets;
  const double lambda = cfg.lambda_cycle;

  // Generator-side forward passes.
  auto fake_y = G.forward(x);
  auto rec_x = F.forward(fake_y.output);
  auto fake_x = F.forward(y);
  auto rec_y = G.forward(fake_x.output);
  auto dy_fake = Dy.forward(fake_y.output);
  auto dx_fake = Dx.forward(fake_x.output);

  const double adv_g = lsgan_loss(dy_fake.output, 1.0);
  const double adv_f = lsgan_loss(dx_fake.output, 1.0);
  const double cycle = lambda * (l1_loss(rec_x.output, x) + l1_loss(rec_y.output, y));

  double identity = 0;
  const double id_scale = cfg.identity_weight * lambda;
  nn::ForwardResult<T> id_g, id_f;
  if (id_scale > 0) {
    id_g = G.forward(y);
    id_f = F.forward(x);
    identity = id_scale * (l1_loss(id_g.output, y) + l1_loss(id_f.output, x));
  }

  // Discriminator forward passes on real images and pooled fakes.
  const nn::Tensor<T> pooled_y = pool_y.query(fake_y.output);
  const nn::Tensor<T> pooled_x = pool_x.query(fake_x.output);
  auto dy_real = Dy.forward(y);
  auto dy_pool = Dy.forward(pooled_y);
  auto dx_real = Dx.forward(x);
  auto dx_pool = Dx.forward(pooled_x);

  LossRecord rec;
  rec.loss_G = adv_g + cycle + identity;
  rec.loss_F = adv_f + cycle + identity;
  rec.loss_Dy = discriminator_loss(dy_real.output, dy_pool.output);
  rec.loss_Dx = discriminator_loss(dx_real.output, dx_pool.output);
  rec.cycle_loss = cycle;
  detail::check_loss(rec.loss_G, "loss_G", step);
  detail::check_loss(rec.loss_F, "loss_F", step);
  detail::check_loss(rec.loss_Dx, "loss_Dx", step);
  detail::check_loss(rec.loss_Dy, "loss_Dy", step);
  detail::check_loss(rec.cycle_loss, "cycle_loss", step);

  // Generator gradients. The discriminators only pass gradients through.
  G.zero_grads();
  F.zero_grads();
  nn::Tensor<T> g_fake_y = Dy.backward(dy_fake.cache, lsgan_grad(dy_fake.output, 1.0, 1.0), false);
  add_into(g_fake_y, F.backward(rec_x.cache, l1_grad(rec_x.output, x, lambda)));
  G.backward(fake_y.cache, g_fake_y);

  nn::Tensor<T> g_fake_x = Dx.backward(dx_fake.cache, lsgan_grad(dx_fake.output, 1.0, 1.0), false);
  add_into(g_fake_x, G.backward(rec_y.cache, l1_grad(rec_y.output, y, lambda)));
  F.backward(fake_x.cache, g_fake_x);

  if (id_scale > 0) {
    G.backward(id_g.cache, l1_grad(id_g.output, y, id_scale));
    F.backward(id_f.cache, l1_grad(id_f.output, x, id_scale));
  }

  // Discriminator gradients.
  Dy.zero_grads();
  Dy.backward(dy_real.cache, lsgan_grad(dy_real.output, 1.0, 0.5));
  Dy.backward(dy_pool.cache, lsgan_grad(dy_pool.output, 0.0, 0.5));
  Dx.zero_grads();
  Dx.backward(dx_real.cache, lsgan_grad(dx_real.output, 1.0, 0.5));
  Dx.backward(dx_pool.cache, lsgan_grad(dx_pool.output, 0.0, 0.5));
  rec.step = step;
  return rec;
}

// compute_gradients on the model's networks at its current step.
LossRecord compute_gradients(CycleGanModel& model, const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                             ImagePool& pool_x, ImagePool& pool_y);

// One simultaneous update of G, F, D_x and D_y on a single (x, y) pair of
// normalised [1,32,32] images, at learning rate lr_at(model.step). Returns
// the losses measured before the update. Throws NumericalError on NaN/Inf.
LossRecord train_step(CycleGanModel& model, const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                      ImagePool& pool_x, ImagePool& pool_y);

struct TrainingSink {
  std::function<void(const LossRecord&)> on_loss;
  std::function<void(const CycleGanModel&)> on_checkpoint;
};

// Runs train_step until model.step == cfg.total_steps. Each step samples one
// Normal and one Anomaly image uniformly, with indices drawn from a per-step
// seed so a resumed run samples the same pairs. Losses go to the sink when
// the step count is a multiple of log_interval; checkpoints at multiples of
// checkpoint_interval (including step 0) and at the final step.
void train(CycleGanModel& model, const Dataset& train_set, const TrainingSink& sink);

// normalize -> G -> denormalize for each template; labelled Anomaly with
// "@step<N>" appended to the source id.
std::vector<TraceImage> generate(const CycleGanModel& model, std::span<const TraceImage> templates);

void save_checkpoint(const CycleGanModel& model, const std::filesystem::path& path);

// Restores networks, optimizer moments and step. Throws FormatError if the
// checkpoint's architecture differs from `cfg` or any tensor is missing or
// mis-shaped.
CycleGanModel load_checkpoint(const std::filesystem::path& path, const GanConfig& cfg);

// The GanConfig recorded inside a checkpoint.
GanConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace anogen
