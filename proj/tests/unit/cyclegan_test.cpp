#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "anogen/agck.hpp"
#include "anogen/cyclegan.hpp"
#include "anogen/errors.hpp"
#include "support/gradcheck.hpp"

using namespace anogen;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

GanConfig tiny_config() {
  GanConfig c;
  c.base_channels = 2;
  c.residual_blocks = 1;
  c.image_pool_size = 0;
  c.total_steps = 20;
  c.lr_initial = c.lr_final = 2e-4;
  c.checkpoint_interval = 5;
  c.log_interval = 2;
  c.seed = 3;
  return c;
}

Tensor<float> random_image(Rng& rng) {
  Tensor<float> t({1, 32, 32});
  for (auto& v : t.values()) v = static_cast<float>(2 * rng.uniform() - 1);
  return t;
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("anogen_cg_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TEST(LrSchedule, DefaultSchedule) {
  const GanConfig c;
  for (const std::uint64_t s : {0ull, 1ull, 75'000ull, 150'000ull}) EXPECT_EQ(lr_at(s, c), 2e-6);
  EXPECT_EQ(lr_at(250'000, c), 1.1e-6);
  for (const std::uint64_t s : {350'000ull, 400'000ull, 10'000'000ull}) EXPECT_EQ(lr_at(s, c), 2e-7);
  double prev = lr_at(0, c);
  for (int i = 1; i <= 1000; ++i) {
    const double lr = lr_at(static_cast<std::uint64_t>(i) * 400, c);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Architecture, OutputShapes) {
  GanConfig c;
  c.base_channels = 16;
  c.residual_blocks = 2;
  const auto G = build_generator(c);
  const auto D = build_discriminator(c);
  EXPECT_EQ(G.infer(Tensor<float>({1, 32, 32})).dims(), (nn::Shape{1, 32, 32}));
  EXPECT_EQ(D.infer(Tensor<float>({1, 32, 32})).dims(), (nn::Shape{1, 6, 6}));
  EXPECT_EQ(nn::layer_kind(G.layers().back()), "Tanh");
  const GanConfig defaults;
  const auto full = build_generator(defaults);
  EXPECT_EQ(std::count_if(full.layers().begin(), full.layers().end(),
                          [](const auto& l) { return nn::layer_kind(l) == "ResidualBlock"; }),
            6);
}

TEST(Losses, PointValues) {
  const Tensor<float> p({2}, std::vector<float>{1.0f, 0.0f});
  EXPECT_DOUBLE_EQ(lsgan_loss(p, 1.0f), 0.5);
  EXPECT_DOUBLE_EQ(lsgan_loss(p, 0.0f), 0.5);
  EXPECT_DOUBLE_EQ(discriminator_loss(Tensor<float>({2}, 1.0f), Tensor<float>({2}, 0.0f)), 0.0);
  EXPECT_DOUBLE_EQ(discriminator_loss(Tensor<float>({2}, 0.0f), Tensor<float>({2}, 1.0f)), 1.0);
  EXPECT_DOUBLE_EQ(l1_loss(Tensor<float>({2}, std::vector<float>{1, -1}), Tensor<float>({2}, 0.0f)), 1.0);
  EXPECT_THROW(l1_loss(Tensor<float>({2}), Tensor<float>({3})), ShapeError);
}

TEST(ImagePool, PassThroughWhenEmptyCapacity) {
  ImagePool pool(0, 1);
  Rng rng(1);
  const auto a = random_image(rng);
  EXPECT_EQ(pool.query(a), a);
  EXPECT_EQ(pool.size(), 0u);
}

TEST(ImagePool, FillsThenSwapsAboutHalfTheTime) {
  ImagePool pool(5, 2);
  std::size_t swapped = 0;
  for (int i = 0; i < 2000; ++i) {
    Tensor<float> img({1}, static_cast<float>(i));
    const auto out = pool.query(img);
    if (i < 5) {
      EXPECT_EQ(out, img);
    } else if (!(out == img)) {
      ++swapped;
      EXPECT_LT(out[0], static_cast<float>(i));  // an older image
    }
    EXPECT_LE(pool.size(), 5u);
  }
  EXPECT_NEAR(static_cast<double>(swapped) / 1995, 0.5, 0.05);
}

// Objectives evaluated from scratch in double precision. `sig` collects the
// ReLU / LeakyReLU sign pattern of every forward pass and the sign of every
// L1 residual, so kink crossings can be detected.
using D = double;
using Sig = std::vector<bool>;

Tensor<D> run(const nn::Network<D>& net, const Tensor<D>& in, Sig& sig) {
  auto fwd = net.forward(in);
  const auto s = gradcheck::kink_signature(net, fwd.cache);
  sig.insert(sig.end(), s.begin(), s.end());
  return std::move(fwd.output);
}

double l1(const Tensor<D>& a, const Tensor<D>& b, Sig& sig) {
  for (std::size_t i = 0; i < a.size(); ++i) sig.push_back(a[i] > b[i]);
  return l1_loss(a, b);
}

struct DoubleGan {
  GanConfig cfg;
  nn::Network<D> G, F, Dx, Dy;
};

double generator_objective(const DoubleGan& m, const Tensor<D>& x, const Tensor<D>& y, Sig& sig) {
  const double lambda = m.cfg.lambda_cycle, idw = m.cfg.identity_weight * lambda;
  const auto gx = run(m.G, x, sig), fy = run(m.F, y, sig);
  double l = lsgan_loss(run(m.Dy, gx, sig), 1.0) + lsgan_loss(run(m.Dx, fy, sig), 1.0);
  l += lambda * (l1(run(m.F, gx, sig), x, sig) + l1(run(m.G, fy, sig), y, sig));
  if (idw > 0) l += idw * (l1(run(m.G, y, sig), y, sig) + l1(run(m.F, x, sig), x, sig));
  return l;
}

double dy_objective(const DoubleGan& m, const Tensor<D>& x, const Tensor<D>& y, Sig& sig) {
  return discriminator_loss(run(m.Dy, y, sig), run(m.Dy, run(m.G, x, sig), sig));
}

double dx_objective(const DoubleGan& m, const Tensor<D>& x, const Tensor<D>& y, Sig& sig) {
  return discriminator_loss(run(m.Dx, x, sig), run(m.Dx, run(m.F, y, sig), sig));
}

TEST(ComputeGradients, MatchFiniteDifferencesOfTheObjectives) {
  auto cfg = tiny_config();
  cfg.identity_weight = 0.5;
  DoubleGan m{cfg, build_generator<D>(cfg), build_generator<D>(cfg), build_discriminator<D>(cfg),
              build_discriminator<D>(cfg)};
  Rng rng(6);
  for (auto* net : {&m.G, &m.F, &m.Dx, &m.Dy}) gradcheck::randomize_params(*net, rng, 0.3);
  Tensor<D> x({1, 32, 32}), y({1, 32, 32});
  for (auto* t : {&x, &y})
    for (auto& v : t->values()) v = 2 * rng.uniform() - 1;
  BasicImagePool<D> px(0, 1), py(0, 2);
  const LossRecord rec = compute_gradients<D>(cfg, {m.G, m.F, m.Dx, m.Dy}, x, y, px, py, 7);
  EXPECT_EQ(rec.step, 7u);
  Sig unused;
  const auto gx = run(m.G, x, unused), fy = run(m.F, y, unused);
  const double cycle = 10 * (l1_loss(run(m.F, gx, unused), x) + l1_loss(run(m.G, fy, unused), y));
  EXPECT_NEAR(rec.cycle_loss, cycle, 1e-12);
  EXPECT_NEAR(rec.loss_Dx, dx_objective(m, x, y, unused), 1e-12);
  EXPECT_NEAR(rec.loss_Dy, dy_objective(m, x, y, unused), 1e-12);

  struct Target {
    const char* name;
    nn::Network<D>* net;
    double (*objective)(const DoubleGan&, const Tensor<D>&, const Tensor<D>&, Sig&);
  };
  const Target targets[] = {{"G", &m.G, generator_objective},
                            {"F", &m.F, generator_objective},
                            {"Dx", &m.Dx, dx_objective},
                            {"Dy", &m.Dy, dy_objective}};
  Rng pick(9);
  for (const auto& t : targets) {
    Sig base;
    t.objective(m, x, y, base);
    std::vector<std::pair<double, double>> pairs;
    std::size_t attempted = 0;
    double scale = 0;
    for (auto& p : t.net->params()) {
      for (int k = 0; k < 6; ++k) {
        const auto i = pick.uniform_index(p.value->size());
        D& v = (*p.value)[i];
        const D orig = v;
        ++attempted;
        // Retry a kink-crossing step once at a tenth of the size.
        for (const double h : {1e-5, 1e-6}) {
          Sig s_up, s_down;
          v = orig + h;
          const double up = t.objective(m, x, y, s_up);
          v = orig - h;
          const double down = t.objective(m, x, y, s_down);
          v = orig;
          if (s_up != base || s_down != base) continue;
          const double numeric = (up - down) / (2 * h);
          pairs.emplace_back((*p.grad)[i], numeric);
          scale = std::max({scale, std::abs(numeric), std::abs((*p.grad)[i])});
          break;
        }
      }
    }
    EXPECT_GE(10 * pairs.size(), 9 * attempted) << t.name << ": too many kink crossings";
    for (const auto& [a, n] : pairs) EXPECT_NEAR(a, n, 1e-6 * scale) << t.name;
  }
}

TEST(ComputeGradients, FloatModelMatchesTheDoubleComputation) {
  auto cfg = tiny_config();
  auto model = build_model(cfg, 5);
  DoubleGan m{cfg, build_generator<D>(cfg), build_generator<D>(cfg), build_discriminator<D>(cfg),
              build_discriminator<D>(cfg)};
  const std::pair<nn::Network<float>*, nn::Network<D>*> pairs[] = {
      {&model.G, &m.G}, {&model.F, &m.F}, {&model.Dx, &m.Dx}, {&model.Dy, &m.Dy}};
  for (const auto& [f, d] : pairs) {
    auto fp = f->params();
    auto dp = d->params();
    for (std::size_t k = 0; k < fp.size(); ++k)
      for (std::size_t i = 0; i < fp[k].value->size(); ++i) (*dp[k].value)[i] = (*fp[k].value)[i];
    d->mark_updated();
  }
  Rng rng(2);
  const auto x = random_image(rng), y = random_image(rng);
  Tensor<D> xd({1, 32, 32}), yd({1, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) {
    xd[i] = x[i];
    yd[i] = y[i];
  }
  ImagePool px(0, 1), py(0, 2);
  BasicImagePool<D> pxd(0, 1), pyd(0, 2);
  const auto rf = compute_gradients(model, x, y, px, py);
  const auto rd = compute_gradients<D>(cfg, {m.G, m.F, m.Dx, m.Dy}, xd, yd, pxd, pyd, 0);
  EXPECT_NEAR(rf.loss_G, rd.loss_G, 1e-4 * std::abs(rd.loss_G));
  EXPECT_NEAR(rf.loss_Dx, rd.loss_Dx, 1e-4 * std::abs(rd.loss_Dx));
  for (const auto& [f, d] : pairs) {
    auto fp = f->params();
    auto dp = d->params();
    double scale = 0, worst = 0;
    for (std::size_t k = 0; k < fp.size(); ++k) {
      for (std::size_t i = 0; i < fp[k].grad->size(); ++i) {
        scale = std::max(scale, std::abs((*dp[k].grad)[i]));
        worst = std::max(worst, std::abs((*dp[k].grad)[i] - (*fp[k].grad)[i]));
      }
    }
    EXPECT_LT(worst, 1e-3 * scale);
  }
}

TEST(Train, LogsAndCheckpointsOnSchedule) {
  auto cfg = tiny_config();
  cfg.total_steps = 12;
  auto model = build_model(cfg, 1);
  const auto data = synth_dataset(4, 4, {50, 200}, 1);
  std::vector<std::uint64_t> logged, saved;
  train(model, data,
        {[&](const LossRecord& r) { logged.push_back(r.step); },
         [&](const CycleGanModel& m) { saved.push_back(m.step); }});
  EXPECT_EQ(logged, (std::vector<std::uint64_t>{2, 4, 6, 8, 10, 12}));
  EXPECT_EQ(saved, (std::vector<std::uint64_t>{0, 5, 10, 12}));
  EXPECT_EQ(model.step, 12u);
}

TEST(Train, IsDeterministicAndResumable) {
  auto cfg = tiny_config();
  cfg.total_steps = 8;
  const auto data = synth_dataset(4, 4, {50, 200}, 2);
  auto once = build_model(cfg, 4);
  train(once, data, {});

  const auto dir = temp_dir("resume");
  auto first = build_model(cfg, 4);
  first.cfg.total_steps = 5;
  train(first, data, {});
  save_checkpoint(first, dir / "mid.agck");
  auto resumed = load_checkpoint(dir / "mid.agck", cfg);
  EXPECT_EQ(resumed.step, 5u);
  train(resumed, data, {});

  save_checkpoint(once, dir / "a.agck");
  save_checkpoint(resumed, dir / "b.agck");
  EXPECT_EQ(encode_agck(read_agck(dir / "a.agck")), encode_agck(read_agck(dir / "b.agck")));
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  auto cfg = tiny_config();
  cfg.total_steps = 3;
  auto model = build_model(cfg, 8);
  train(model, synth_dataset(3, 3, {40, 90}, 3), {});
  const auto dir = temp_dir("roundtrip");
  save_checkpoint(model, dir / "c.agck");
  const auto back = load_checkpoint(dir / "c.agck", cfg);
  EXPECT_EQ(back.step, model.step);
  EXPECT_EQ(read_checkpoint_config(dir / "c.agck"), cfg);
  for (auto [a, b] : {std::pair{&model.G, &back.G}, {&model.F, &back.F}, {&model.Dx, &back.Dx},
                      {&model.Dy, &back.Dy}}) {
    const auto pa = std::as_const(*a).params(), pb = b->params();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value) << pa[i].name;
  }
  EXPECT_EQ(back.opt_G.t, model.opt_G.t);
  ASSERT_EQ(back.opt_Dy.m.size(), model.opt_Dy.m.size());
  for (std::size_t i = 0; i < model.opt_Dy.m.size(); ++i) {
    EXPECT_EQ(back.opt_Dy.m[i], model.opt_Dy.m[i]);
    EXPECT_EQ(back.opt_Dy.v[i], model.opt_Dy.v[i]);
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, ArchitectureMismatchNamesTheField) {
  auto cfg = tiny_config();
  const auto model = build_model(cfg, 1);
  const auto dir = temp_dir("mismatch");
  save_checkpoint(model, dir / "c.agck");
  auto other = cfg;
  other.residual_blocks = 3;
  try {
    load_checkpoint(dir / "c.agck", other);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "config.gan.residual_blocks");
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, TruncatedFilesFailWithFormatError) {
  const auto model = build_model(tiny_config(), 1);
  const auto dir = temp_dir("trunc");
  save_checkpoint(model, dir / "c.agck");
  const auto size = fs::file_size(dir / "c.agck");
  for (const auto keep : {std::uintmax_t{0}, std::uintmax_t{3}, std::uintmax_t{20}, size / 2, size - 1}) {
    fs::copy_file(dir / "c.agck", dir / "t.agck", fs::copy_options::overwrite_existing);
    fs::resize_file(dir / "t.agck", keep);
    EXPECT_THROW(load_checkpoint(dir / "t.agck", tiny_config()), FormatError) << keep;
  }
  fs::remove_all(dir);
}

TEST(Generate, OneAnomalyPerTemplate) {
  auto model = build_model(tiny_config(), 2);
  model.step = 500;
  std::vector<TraceImage> templates(3);
  for (std::size_t i = 0; i < 3; ++i) templates[i].source_id = "t" + std::to_string(i);
  const auto out = generate(model, templates);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i].label, Label::Anomaly);
    EXPECT_EQ(out[i].source_id, "t" + std::to_string(i) + "@step500");
  }
  EXPECT_EQ(generate(model, templates), out);
}

TEST(Config, EntriesRoundTripAndValidation) {
  GanConfig c;
  c.lr_initial = 1.0 / 3.0;
  c.seed = 18446744073709551615ull;
  EXPECT_EQ(GanConfig::from_entries(c.to_entries()), c);
  GanConfig bad;
  bad.lr_final = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = GanConfig{};
  bad.base_channels = 0;
  EXPECT_THROW(build_model(bad, 1), std::invalid_argument);
}

}  // namespace
