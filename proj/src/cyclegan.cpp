#include "anogen/cyclegan.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "anogen/agck.hpp"
#include "anogen/errors.hpp"

namespace anogen {

using nn::Tensor;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Int>
Int parse_uint(const std::string& key, const std::string& s) {
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("config." + key, "bad integer '" + s + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("config." + key, "bad number '" + s + "'");
  }
}

}  // namespace

void GanConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("gan." + field + ": " + why);
  };
  if (residual_blocks == 0) fail("residual_blocks", "must be positive");
  if (base_channels == 0) fail("base_channels", "must be positive");
  if (!(lambda_cycle > 0)) fail("lambda_cycle", "must be positive");
  if (!(identity_weight >= 0)) fail("identity_weight", "must be non-negative");
  if (lr_decay_steps == 0) fail("lr_decay_steps", "must be positive");
  if (!(lr_initial > 0)) fail("lr_initial", "must be positive");
  if (!(lr_final > 0)) fail("lr_final", "must be positive");
  if (lr_final > lr_initial) fail("lr_final", "must not exceed lr_initial");
  if (checkpoint_interval == 0) fail("checkpoint_interval", "must be positive");
  if (log_interval == 0) fail("log_interval", "must be positive");
}

std::vector<std::pair<std::string, std::string>> GanConfig::to_entries() const {
  return {
      {"gan.residual_blocks", std::to_string(residual_blocks)},
      {"gan.base_channels", std::to_string(base_channels)},
      {"gan.lambda_cycle", format_double(lambda_cycle)},
      {"gan.identity_weight", format_double(identity_weight)},
      {"gan.image_pool_size", std::to_string(image_pool_size)},
      {"gan.total_steps", std::to_string(total_steps)},
      {"gan.lr_plateau_steps", std::to_string(lr_plateau_steps)},
      {"gan.lr_decay_steps", std::to_string(lr_decay_steps)},
      {"gan.lr_initial", format_double(lr_initial)},
      {"gan.lr_final", format_double(lr_final)},
      {"gan.checkpoint_interval", std::to_string(checkpoint_interval)},
      {"gan.log_interval", std::to_string(log_interval)},
      {"gan.seed", std::to_string(seed)},
  };
}

GanConfig GanConfig::from_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
  GanConfig c;
  for (const auto& [k, v] : entries) {
    if (k == "gan.residual_blocks") c.residual_blocks = parse_uint<std::size_t>(k, v);
    else if (k == "gan.base_channels") c.base_channels = parse_uint<std::size_t>(k, v);
    else if (k == "gan.lambda_cycle") c.lambda_cycle = parse_double(k, v);
    else if (k == "gan.identity_weight") c.identity_weight = parse_double(k, v);
    else if (k == "gan.image_pool_size") c.image_pool_size = parse_uint<std::size_t>(k, v);
    else if (k == "gan.total_steps") c.total_steps = parse_uint<std::uint64_t>(k, v);
    else if (k == "gan.lr_plateau_steps") c.lr_plateau_steps = parse_uint<std::uint64_t>(k, v);
    else if (k == "gan.lr_decay_steps") c.lr_decay_steps = parse_uint<std::uint64_t>(k, v);
    else if (k == "gan.lr_initial") c.lr_initial = parse_double(k, v);
    else if (k == "gan.lr_final") c.lr_final = parse_double(k, v);
    else if (k == "gan.checkpoint_interval") c.checkpoint_interval = parse_uint<std::uint64_t>(k, v);
    else if (k == "gan.log_interval") c.log_interval = parse_uint<std::uint64_t>(k, v);
    else if (k == "gan.seed") c.seed = parse_uint<std::uint64_t>(k, v);
  }
  return c;
}

namespace {

nn::AdamState<float> gan_adam() {
  nn::AdamState<float> s;
  s.beta1 = kGanAdamBeta1;
  s.beta2 = kGanAdamBeta2;
  return s;
}

}  // namespace

CycleGanModel build_model(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CycleGanModel m{cfg,        build_generator(cfg), build_generator(cfg), build_discriminator(cfg),
                  build_discriminator(cfg), gan_adam(), gan_adam(), gan_adam(), gan_adam(), 0};
  nn::init_weights(m.G, derive_seed(seed, "init-G"));
  nn::init_weights(m.F, derive_seed(seed, "init-F"));
  nn::init_weights(m.Dx, derive_seed(seed, "init-Dx"));
  nn::init_weights(m.Dy, derive_seed(seed, "init-Dy"));
  return m;
}

double lr_at(std::uint64_t step, const GanConfig& cfg) {
  if (step <= cfg.lr_plateau_steps) return cfg.lr_initial;
  const std::uint64_t into = step - cfg.lr_plateau_steps;
  if (into >= cfg.lr_decay_steps) return cfg.lr_final;
  const double t = static_cast<double>(into) / static_cast<double>(cfg.lr_decay_steps);
  return cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * t;
}

namespace detail {

void check_loss(double v, const char* name, std::uint64_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError("non-finite " + std::string(name) + " at step " + std::to_string(step));
  }
}

}  // namespace detail

LossRecord compute_gradients(CycleGanModel& model, const Tensor<float>& x, const Tensor<float>& y, ImagePool& pool_x,
                             ImagePool& pool_y) {
  return compute_gradients<float>(model.cfg, {model.G, model.F, model.Dx, model.Dy}, x, y, pool_x, pool_y,
                                  model.step);
}

LossRecord train_step(CycleGanModel& model, const Tensor<float>& x, const Tensor<float>& y, ImagePool& pool_x,
                      ImagePool& pool_y) {
  const double lr = lr_at(model.step, model.cfg);
  LossRecord rec = compute_gradients(model, x, y, pool_x, pool_y);
  nn::adam_step(model.G, model.opt_G, lr);
  nn::adam_step(model.F, model.opt_F, lr);
  nn::adam_step(model.Dx, model.opt_Dx, lr);
  nn::adam_step(model.Dy, model.opt_Dy, lr);
  ++model.step;
  rec.step = model.step;
  return rec;
}

void train(CycleGanModel& model, const Dataset& train_set, const TrainingSink& sink) {
  const GanConfig& cfg = model.cfg;
  cfg.validate();
  std::vector<Tensor<float>> xs, ys;
  for (const auto& t : train_set.traces) {
    (t.label == Label::Normal ? xs : ys).push_back(normalize(sequence_to_image(t)));
  }
  if (xs.empty()) throw DataError("train: training set has no Normal traces");
  if (ys.empty()) throw DataError("train: training set has no Anomaly traces");

  ImagePool pool_x(cfg.image_pool_size, derive_seed(cfg.seed, "pool-x"));
  ImagePool pool_y(cfg.image_pool_size, derive_seed(cfg.seed, "pool-y"));
  const std::uint64_t sampler = derive_seed(cfg.seed, "gan-sampler");

  auto checkpoint = [&] {
    if (sink.on_checkpoint) sink.on_checkpoint(model);
  };
  if (model.step % cfg.checkpoint_interval == 0) checkpoint();
  while (model.step < cfg.total_steps) {
    Rng rng(derive_seed(sampler, model.step));
    const auto ix = rng.uniform_index(xs.size());
    const auto iy = rng.uniform_index(ys.size());
    const LossRecord rec = train_step(model, xs[ix], ys[iy], pool_x, pool_y);
    if (sink.on_loss && model.step % cfg.log_interval == 0) sink.on_loss(rec);
    if (model.step % cfg.checkpoint_interval == 0 || model.step == cfg.total_steps) checkpoint();
  }
}

std::vector<TraceImage> generate(const CycleGanModel& model, std::span<const TraceImage> templates) {
  std::vector<TraceImage> out;
  out.reserve(templates.size());
  const std::string suffix = "@step" + std::to_string(model.step);
  for (const auto& t : templates) {
    out.push_back(denormalize(model.G.infer(normalize(t)), Label::Anomaly, t.source_id + suffix));
  }
  return out;
}

namespace {

const std::pair<const char*, nn::Network<float> CycleGanModel::*> kNetworks[] = {
    {"G", &CycleGanModel::G}, {"F", &CycleGanModel::F}, {"Dx", &CycleGanModel::Dx}, {"Dy", &CycleGanModel::Dy}};

const std::pair<const char*, nn::AdamState<float> CycleGanModel::*> kOptimizers[] = {
    {"G", &CycleGanModel::opt_G}, {"F", &CycleGanModel::opt_F}, {"Dx", &CycleGanModel::opt_Dx},
    {"Dy", &CycleGanModel::opt_Dy}};

}  // namespace

void save_checkpoint(const CycleGanModel& model, const std::filesystem::path& path) {
  AgckFile file;
  file.config.emplace_back("kind", "cyclegan");
  file.config.emplace_back("step", std::to_string(model.step));
  for (auto& e : model.cfg.to_entries()) file.config.push_back(std::move(e));
  for (const auto& [name, opt] : kOptimizers) {
    file.config.emplace_back(std::string("adam.") + name + ".t", std::to_string((model.*opt).t));
  }
  for (const auto& [name, net] : kNetworks) {
    for (const auto& p : (model.*net).params()) file.tensors.emplace_back(std::string(name) + "." + p.name, *p.value);
  }
  for (const auto& [name, opt_ptr] : kOptimizers) {
    const auto& opt = model.*opt_ptr;
    for (std::size_t k = 0; k < opt.m.size(); ++k) {
      file.tensors.emplace_back(std::string("adam.") + name + ".m." + std::to_string(k), opt.m[k]);
      file.tensors.emplace_back(std::string("adam.") + name + ".v." + std::to_string(k), opt.v[k]);
    }
  }
  write_agck(file, path);
}

GanConfig read_checkpoint_config(const std::filesystem::path& path) {
  const AgckFile file = read_agck(path);
  if (file.require("kind") != "cyclegan") throw FormatError("config.kind", "not a Cycle-GAN checkpoint");
  return GanConfig::from_entries(file.config);
}

CycleGanModel load_checkpoint(const std::filesystem::path& path, const GanConfig& cfg) {
  const AgckFile file = read_agck(path);
  if (file.require("kind") != "cyclegan") throw FormatError("config.kind", "not a Cycle-GAN checkpoint");
  const GanConfig stored = GanConfig::from_entries(file.config);
  if (stored.residual_blocks != cfg.residual_blocks) {
    throw FormatError("config.gan.residual_blocks", "shape mismatch: checkpoint has " +
                                                        std::to_string(stored.residual_blocks) +
                                                        ", configuration expects " + std::to_string(cfg.residual_blocks));
  }
  if (stored.base_channels != cfg.base_channels) {
    throw FormatError("config.gan.base_channels", "shape mismatch: checkpoint has " +
                                                      std::to_string(stored.base_channels) +
                                                      ", configuration expects " + std::to_string(cfg.base_channels));
  }

  CycleGanModel model{cfg,        build_generator(cfg), build_generator(cfg), build_discriminator(cfg),
                      build_discriminator(cfg), gan_adam(), gan_adam(), gan_adam(), gan_adam(), 0};
  model.step = parse_uint<std::uint64_t>("step", file.require("step"));

  for (const auto& [name, net] : kNetworks) {
    for (auto& p : (model.*net).params()) {
      const std::string full = std::string(name) + "." + p.name;
      const Tensor<float>* t = file.find_tensor(full);
      if (!t) throw FormatError("tensor '" + full + "'", "missing from checkpoint");
      if (t->dims() != p.value->dims()) {
        throw FormatError("tensor '" + full + "'", "shape mismatch: checkpoint has " + nn::shape_string(t->dims()) +
                                                       ", model expects " + nn::shape_string(p.value->dims()));
      }
      *p.value = *t;
    }
    (model.*net).mark_updated();
  }
  for (std::size_t i = 0; i < std::size(kOptimizers); ++i) {
    const auto& [name, opt_ptr] = kOptimizers[i];
    auto& opt = model.*opt_ptr;
    const std::string prefix = std::string("adam.") + name;
    opt.t = parse_uint<std::uint64_t>(prefix + ".t", file.require(prefix + ".t"));
    if (opt.t == 0) continue;
    for (const auto& p : (model.*(kNetworks[i].second)).params()) {
      const std::size_t k = opt.m.size();
      for (const char* which : {".m.", ".v."}) {
        const std::string full = prefix + which + std::to_string(k);
        const Tensor<float>* t = file.find_tensor(full);
        if (!t) throw FormatError("tensor '" + full + "'", "missing from checkpoint");
        if (t->dims() != p.value->dims()) {
          throw FormatError("tensor '" + full + "'", "shape mismatch: checkpoint has " + nn::shape_string(t->dims()) +
                                                         ", model expects " + nn::shape_string(p.value->dims()));
        }
        (which[1] == 'm' ? opt.m : opt.v).push_back(*t);
      }
    }
  }
  return model;
}

}  // namespace anogen
