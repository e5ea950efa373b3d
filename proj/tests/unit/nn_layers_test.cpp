#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <utility>

#include "anogen/errors.hpp"
#include "anogen/nn/network.hpp"
#include "support/gradcheck.hpp"

using namespace anogen;
using namespace anogen::nn;

namespace {

// Textbook cross-correlation with explicit padding lookup.
Tensor<double> reference_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                              std::size_t s, std::size_t p, bool reflect) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
  auto fetch = [&](std::size_t c, long y, long xx) -> double {
    if (reflect) {
      if (y < 0) y = -y;
      if (y >= static_cast<long>(H)) y = 2 * static_cast<long>(H) - 2 - y;
      if (xx < 0) xx = -xx;
      if (xx >= static_cast<long>(W)) xx = 2 * static_cast<long>(W) - 2 - xx;
    } else if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) {
      return 0.0;
    }
    return x.at(c, y, xx);
  };
  Tensor<double> out({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx)
              acc += w[((o * C + c) * K + ky) * K + kx] *
                     fetch(c, static_cast<long>(oy * s + ky) - static_cast<long>(p),
                           static_cast<long>(ox * s + kx) - static_cast<long>(p));
        out.at(o, oy, ox) = acc;
      }
  return out;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Conv2d, MatchesDirectLoops) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const bool reflect = trial % 2;
    const std::size_t C = 1 + rng.uniform_index(3), O = 1 + rng.uniform_index(3), K = 1 + rng.uniform_index(4);
    const std::size_t s = 1 + rng.uniform_index(2), H = K + 2 + rng.uniform_index(5), W = K + 2 + rng.uniform_index(5);
    const std::size_t p = reflect ? 1 + rng.uniform_index(2) : rng.uniform_index(3);
    Conv2d<double> conv(C, O, K, s, p, reflect ? PaddingMode::Reflect : PaddingMode::Zero);
    conv.weight.value = gradcheck::random_tensor<double>(conv.weight.value.dims(), rng);
    conv.bias.value = gradcheck::random_tensor<double>(conv.bias.value.dims(), rng);
    const auto x = gradcheck::random_tensor<double>({C, H, W}, rng);
    LayerCache<double> cache;
    const auto y = conv.forward(x, cache);
    const auto ref = reference_conv(x, conv.weight.value, conv.bias.value, s, p, reflect);
    ASSERT_EQ(y.dims(), ref.dims());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, OutputShapes) {
  EXPECT_EQ(Conv2d<float>(1, 16, 7, 1, 3, PaddingMode::Reflect).output_shape({1, 32, 32}), (Shape{16, 32, 32}));
  EXPECT_EQ(Conv2d<float>(16, 32, 3, 2, 1).output_shape({16, 32, 32}), (Shape{32, 16, 16}));
  EXPECT_EQ(Conv2d<float>(1, 32, 4, 2, 1).output_shape({1, 32, 32}), (Shape{32, 16, 16}));
  EXPECT_EQ(Conv2d<float>(128, 1, 4, 1, 1).output_shape({128, 7, 7}), (Shape{1, 6, 6}));
  EXPECT_THROW(Conv2d<float>(2, 4, 3, 1, 1).output_shape({3, 8, 8}), ShapeError);
  EXPECT_THROW(Conv2d<float>(1, 1, 3, 1, 4, PaddingMode::Reflect).output_shape({1, 4, 4}), ShapeError);
}

TEST(TransposedConv2d, IsTheAdjointOfStridedConv) {
  // <Conv(x), y> == <x, ConvT(y)> when both share weights and have no bias.
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.uniform_index(3), O = 1 + rng.uniform_index(3), K = 3, s = 2, p = 1;
    const std::size_t H = 8, W = 8;
    Conv2d<double> conv(C, O, K, s, p);
    conv.weight.value = gradcheck::random_tensor<double>(conv.weight.value.dims(), rng);
    TransposedConv2d<double> tconv(O, C, K, s, p, 1);
    tconv.weight.value = conv.weight.value;  // [O,C,K,K] is [in,out,k,k] for the transpose
    const auto x = gradcheck::random_tensor<double>({C, H, W}, rng);
    LayerCache<double> c1, c2;
    const auto cx = conv.forward(x, c1);
    const auto y = gradcheck::random_tensor<double>(cx.dims(), rng);
    const auto ty = tconv.forward(y, c2);
    ASSERT_EQ(ty.dims(), x.dims());
    EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10);
  }
}

TEST(TransposedConv2d, DoublesSpatialSize) {
  EXPECT_EQ(TransposedConv2d<float>(64, 32, 3, 2, 1, 1).output_shape({64, 8, 8}), (Shape{32, 16, 16}));
  EXPECT_EQ(TransposedConv2d<float>(32, 16, 3, 2, 1, 1).output_shape({32, 16, 16}), (Shape{16, 32, 32}));
}

TEST(InstanceNorm, StandardisesEachPlane) {
  Rng rng(2);
  InstanceNorm<double> norm(3);
  auto x = gradcheck::random_tensor<double>({3, 5, 7}, rng, 4.0);
  for (std::size_t i = 0; i < 35; ++i) x[i] += 10.0;  // offset the first channel
  LayerCache<double> cache;
  const auto y = norm.forward(x, cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 35; ++i) m += y[c * 35 + i];
    m /= 35;
    for (std::size_t i = 0; i < 35; ++i) v += (y[c * 35 + i] - m) * (y[c * 35 + i] - m);
    v /= 35;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-5);  // eps = 1e-5 in the denominator
  }
}

TEST(InstanceNorm, AffineParametersApplyPerChannel) {
  InstanceNorm<double> norm(2);
  norm.scale.value[1] = 3.0;
  norm.shift.value[1] = -2.0;
  Tensor<double> x({2, 1, 2}, std::vector<double>{1, 3, 1, 3});
  LayerCache<double> cache;
  const auto y = norm.forward(x, cache);
  const double z = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -z, 1e-12);
  EXPECT_NEAR(y[1], z, 1e-12);
  EXPECT_NEAR(y[2], -3 * z - 2, 1e-12);
  EXPECT_NEAR(y[3], 3 * z - 2, 1e-12);
}

TEST(InstanceNorm, InvariantToPerPlaneShiftAndPositiveScale) {
  Rng rng(8);
  InstanceNorm<double> norm(1);
  const auto x = gradcheck::random_tensor<double>({1, 6, 6}, rng);
  Tensor<double> x2 = x;
  for (auto& v : x2.values()) v = 5.0 * v + 7.0;
  LayerCache<double> c1, c2;
  const auto y1 = norm.forward(x, c1), y2 = norm.forward(x2, c2);
  for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_NEAR(y1[i], y2[i], 1e-5);
}

TEST(Activations, PointValues) {
  LayerCache<double> c;
  Tensor<double> x({1, 1, 4}, std::vector<double>{-2.0, -0.5, 0.0, 1.5});
  EXPECT_EQ(ReLU<double>{}.forward(x, c).values()[0], 0.0);
  EXPECT_EQ(ReLU<double>{}.forward(x, c).values()[3], 1.5);
  EXPECT_DOUBLE_EQ(LeakyReLU<double>(0.2).forward(x, c).values()[0], -0.4);
  EXPECT_DOUBLE_EQ(Tanh<double>{}.forward(x, c).values()[3], std::tanh(1.5));
  EXPECT_DOUBLE_EQ(Sigmoid<double>{}.forward(x, c).values()[2], 0.5);
  Tensor<float> big({1}, std::vector<float>{-200.0f});
  LayerCache<float> cf;
  const auto s = Sigmoid<float>{}.forward(big, cf);
  EXPECT_TRUE(std::isfinite(s[0]));
  EXPECT_GE(s[0], 0.0f);
}

TEST(ResidualBlock, IsIdentityWhenSecondNormIsZeroed) {
  Rng rng(4);
  ResidualBlock<double> block(2);
  block.conv1.weight.value = gradcheck::random_tensor<double>(block.conv1.weight.value.dims(), rng);
  block.conv2.weight.value = gradcheck::random_tensor<double>(block.conv2.weight.value.dims(), rng);
  block.norm2.scale.value.fill(0.0);
  const auto x = gradcheck::random_tensor<double>({2, 5, 5}, rng);
  LayerCache<double> c;
  EXPECT_EQ(block.forward(x, c), x);
}

TEST(Linear, BatchRowsAreIndependent) {
  Rng rng(3);
  Linear<double> lin(4, 3);
  lin.weight.value = gradcheck::random_tensor<double>({3, 4}, rng);
  lin.bias.value = gradcheck::random_tensor<double>({3}, rng);
  const auto batch = gradcheck::random_tensor<double>({2, 4}, rng);
  LayerCache<double> c;
  const auto yb = lin.forward(batch, c);
  for (std::size_t n = 0; n < 2; ++n) {
    Tensor<double> row({4}, std::vector<double>(batch.data() + 4 * n, batch.data() + 4 * n + 4));
    const auto yr = lin.forward(row, c);
    for (std::size_t o = 0; o < 3; ++o) {
      double ref = lin.bias.value[o];
      for (std::size_t i = 0; i < 4; ++i) ref += lin.weight.value[o * 4 + i] * row[i];
      EXPECT_NEAR(yr[o], ref, 1e-12);
      EXPECT_NEAR(yb[n * 3 + o], ref, 1e-12);
    }
  }
}

Network<float> small_net() {
  std::vector<Layer<float>> layers;
  layers.emplace_back(Conv2d<float>(1, 2, 3, 1, 1));
  layers.emplace_back(ReLU<float>{});
  layers.emplace_back(Conv2d<float>(2, 1, 3, 1, 1));
  return Network<float>(std::move(layers));
}

TEST(Network, ShapeErrorsNameTheLayer) {
  auto net = small_net();
  try {
    net.forward(Tensor<float>({2, 4, 4}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0 (Conv2d)"), std::string::npos) << e.what();
  }
}

TEST(Network, NonFiniteActivationRaises) {
  auto net = small_net();
  Tensor<float> x({1, 4, 4});
  std::get<Conv2d<float>>(net.layers()[0]).weight.value[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(net.forward(x), NumericalError);
}

TEST(Network, RejectsStaleAndForeignCaches) {
  auto net = small_net();
  const Tensor<float> x({1, 4, 4}, 0.5f);
  auto fwd = net.forward(x);
  const Tensor<float> g(fwd.output.dims(), 1.0f);
  net.mark_updated();
  EXPECT_THROW(net.backward(fwd.cache, g), std::logic_error);

  auto copy = net;
  auto fwd2 = net.forward(x);
  EXPECT_THROW(copy.backward(fwd2.cache, g), std::logic_error);
  EXPECT_NO_THROW(net.backward(fwd2.cache, g));
}

TEST(Network, ParamNamesAreIndexed) {
  std::vector<Layer<float>> layers;
  layers.emplace_back(Conv2d<float>(1, 1, 3, 1, 1));
  layers.emplace_back(ResidualBlock<float>(1));
  Network<float> net(std::move(layers));
  std::vector<std::string> names;
  for (const auto& p : std::as_const(net).params()) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{"0.weight", "0.bias", "1.conv1.weight", "1.conv1.bias", "1.norm1.scale",
                                             "1.norm1.shift", "1.conv2.weight", "1.conv2.bias", "1.norm2.scale",
                                             "1.norm2.shift"}));
  EXPECT_EQ(net.parameter_count(), 10u + 2 * 10u + 4u);
}

TEST(Tensor, RejectsZeroDimsAndLengthMismatch) {
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
}

}  // namespace
