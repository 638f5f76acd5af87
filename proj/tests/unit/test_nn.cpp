// Copyright 2026 The equicascade Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "equicascade/checkpoint.hpp"
#include "equicascade/error.hpp"
#include "equicascade/nn/layers.hpp"
#include "equicascade/nn/sequential.hpp"
#include "oracles.hpp"

using namespace equicascade;
using namespace equicascade::nn;

namespace {

constexpr double kEps = 1e-6;
constexpr double kTol = 1e-3;

Tensor<double> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double keep_off_zero = 0.0) {
  Tensor<double> t(n, c, h, w);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = u(rng);
    if (std::abs(v) < keep_off_zero) v += v < 0 ? -keep_off_zero : keep_off_zero;
    t[i] = v;
  }
  return t;
}

/// Checks dL/dx and dL/dtheta for L = <R, layer(x)> with a fixed random R.
void check_layer(Layer<double>& layer, Tensor<double> x, Mode mode, std::mt19937_64& rng, int probes = 6) {
  const Tensor<double> y0 = layer.forward(x, mode);
  const Tensor<double> r = random_tensor(y0.n(), y0.c(), y0.h(), y0.w(), rng);
  auto loss = [&]() {
    const Tensor<double> y = layer.forward(x, mode);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  for (auto* p : layer.parameters()) p->grad.fill(0);
  layer.forward(x, mode);
  const Tensor<double> gx = layer.backward(r);
  ASSERT_TRUE(gx.same_shape(x));

  std::vector<std::pair<std::string, double>> analytic;
  for (auto* p : layer.parameters()) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) analytic.emplace_back(p->name, p->grad[i]);
  }

  std::uniform_int_distribution<std::size_t> pick_x(0, x.size() - 1);
  for (int k = 0; k < probes; ++k) {
    const std::size_t i = pick_x(rng);
    const double num = oracle::central_difference(loss, x[i], kEps);
    EXPECT_LT(oracle::relative_error(gx[i], num), kTol) << layer.kind() << " input " << i;
  }
  std::size_t offset = 0;
  for (auto* p : layer.parameters()) {
    std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
    for (int k = 0; k < probes; ++k) {
      const std::size_t i = pick(rng);
      const double num = oracle::central_difference(loss, p->value[i], kEps);
      EXPECT_LT(oracle::relative_error(analytic[offset + i].second, num), kTol)
          << layer.kind() << " param " << p->name << "[" << i << "]";
    }
    offset += p->value.size();
  }
}

}  // namespace

TEST(GradCheck, Conv2dVariants) {
  std::mt19937_64 rng(1);
  Rng init(2);
  for (auto [k, s, p, bias] : std::vector<std::tuple<int, int, int, bool>>{
           {3, 1, 1, true}, {5, 2, 2, false}, {11, 4, 5, true}, {1, 1, 0, true}, {3, 2, 0, true}}) {
    Conv2d<double> conv(3, 4, k, s, p, bias, init);
    check_layer(conv, random_tensor(2, 3, 13, 13, rng), Mode::kTrain, rng);
  }
}

TEST(GradCheck, BatchNormTrainAndEval) {
  std::mt19937_64 rng(3);
  BatchNorm2d<double> bn(3);
  auto* gamma = bn.parameters()[0];
  for (std::size_t i = 0; i < gamma->value.size(); ++i) gamma->value[i] = 0.5 + 0.3 * static_cast<double>(i);
  check_layer(bn, random_tensor(3, 3, 5, 4, rng), Mode::kTrain, rng);
  check_layer(bn, random_tensor(3, 3, 5, 4, rng), Mode::kEval, rng);
}

TEST(GradCheck, Activations) {
  std::mt19937_64 rng(4);
  ReLU<double> relu;
  check_layer(relu, random_tensor(2, 3, 4, 4, rng, 0.05), Mode::kTrain, rng);
  LeakyReLU<double> leaky(0.1);
  check_layer(leaky, random_tensor(2, 3, 4, 4, rng, 0.05), Mode::kTrain, rng);
}

TEST(GradCheck, Pooling) {
  std::mt19937_64 rng(5);
  MaxPool2d<double> pool(2, 2);
  check_layer(pool, random_tensor(2, 3, 8, 8, rng), Mode::kTrain, rng);
  MaxPool2d<double> overlap(3, 2);
  check_layer(overlap, random_tensor(2, 2, 9, 9, rng), Mode::kTrain, rng);
  GlobalAvgPool<double> gap;
  check_layer(gap, random_tensor(2, 3, 5, 6, rng), Mode::kTrain, rng);
}

TEST(GradCheck, Linear) {
  std::mt19937_64 rng(6);
  Rng init(7);
  Linear<double> fc(3 * 2 * 2, 5, init);
  check_layer(fc, random_tensor(3, 3, 2, 2, rng), Mode::kTrain, rng);
}

TEST(GradCheck, RegionLayer) {
  std::mt19937_64 rng(8);
  Rng init(9);
  RegionLayer<double> region(2, 4, init);
  // 10 is not divisible by 4: uneven cells
  check_layer(region, random_tensor(2, 2, 10, 10, rng), Mode::kTrain, rng, 10);
  RegionLayer<double> fine(3, 8, init);
  check_layer(fine, random_tensor(2, 3, 16, 16, rng), Mode::kTrain, rng, 10);
}

TEST(RegionLayer, ShapeMatchesPlainConvolution) {
  Rng init(10);
  RegionLayer<float> region(4, 8, init);
  Conv2d<float> plain(4, 4, 3, 1, 1, true, init);
  Tensor<float> x(2, 4, 44, 44, 0.5f);
  EXPECT_EQ(region.forward(x, Mode::kEval).dims(), plain.forward(x, Mode::kEval).dims());
  EXPECT_EQ(region.grid(), 8);
}

TEST(Sequential, BackwardFromMiddleAndInferMatchesForward) {
  std::mt19937_64 rng(11);
  Rng init(12);
  Sequential<double> net;
  net.add("conv1", std::make_unique<Conv2d<double>>(2, 3, 3, 1, 1, true, init));
  net.add("relu1", std::make_unique<ReLU<double>>());
  net.add("gap", std::make_unique<GlobalAvgPool<double>>());
  net.add("fc", std::make_unique<Linear<double>>(3, 1, init));
  const auto x = random_tensor(2, 2, 6, 6, rng);
  const auto y = net.forward(x, Mode::kEval);
  const auto z = net.infer(x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], z[i]);
  EXPECT_EQ(net.index_of("gap"), 2u);
  EXPECT_EQ(net.index_of("missing"), net.size());
  EXPECT_EQ(net.name(0), "conv1");
  for (auto* p : net.parameters()) EXPECT_TRUE(p->name.rfind("conv1.", 0) == 0 || p->name.rfind("fc.", 0) == 0) << p->name;

  std::vector<Tensor<double>> outs;
  net.forward(x, Mode::kEval, outs);
  ASSERT_EQ(outs.size(), net.size());
  Tensor<double> seed = Tensor<double>::zeros_like(y);
  seed.fill(1.0);
  const auto g = net.backward(seed, 2);
  EXPECT_TRUE(g.same_shape(outs[1]));
}

TEST(Loss, BceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  Tensor<double> z = random_tensor(6, 1, 1, 1, rng);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] *= 8;  // include saturated logits
  const std::vector<double> t{1, 0, 1, 1, 0, 0};
  const auto res = bce_with_logits(z, t);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double num = oracle::central_difference([&] { return bce_with_logits(z, t).loss; }, z[i], kEps);
    EXPECT_LT(oracle::relative_error(res.grad[i], num), kTol);
  }
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_GT(sigmoid(800.0), 0.99);
  EXPECT_LT(sigmoid(-800.0), 0.01);
}

TEST(Optimizer, MomentumStepAndCosineSchedule) {
  Parameter<double> p{"w", Tensor<double>(1, 1, 1, 2, 1.0), Tensor<double>(1, 1, 1, 2, 0.5)};
  SgdMomentum<double> sgd(0.9, 0.0);
  sgd.step({&p}, 0.1);
  EXPECT_NEAR(p.value[0], 1.0 - 0.05, 1e-12);
  sgd.step({&p}, 0.1);
  EXPECT_NEAR(p.value[0], 0.95 - 0.1 * (0.9 * 0.5 + 0.5), 1e-12);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(1.0, 0, 10), 1.0);
  EXPECT_NEAR(cosine_learning_rate(1.0, 5, 10), 0.5, 1e-12);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  Rng init(14);
  Sequential<float> net;
  net.add("conv", std::make_unique<Conv2d<float>>(3, 4, 3, 1, 1, true, init));
  net.add("bn", std::make_unique<BatchNorm2d<float>>(4));
  Checkpoint ckpt;
  ckpt.architecture = "probe";
  ckpt.metadata["k"] = "v";
  store_state(ckpt, net.state(), "net.");
  const std::string bytes = encode_checkpoint(ckpt);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.architecture, "probe");
  EXPECT_EQ(back.meta("k"), "v");
  EXPECT_THROW(back.meta("absent"), ParseError);
  ASSERT_EQ(back.arrays.size(), ckpt.arrays.size());
  for (std::size_t i = 0; i < back.arrays.size(); ++i) {
    EXPECT_EQ(back.arrays[i].name, ckpt.arrays[i].name);
    EXPECT_EQ(back.arrays[i].dims, ckpt.arrays[i].dims);
    EXPECT_EQ(back.arrays[i].values, ckpt.arrays[i].values);
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);

  Rng other(99);
  Sequential<float> net2;
  net2.add("conv", std::make_unique<Conv2d<float>>(3, 4, 3, 1, 1, true, other));
  net2.add("bn", std::make_unique<BatchNorm2d<float>>(4));
  load_state(back, net2.state(), "net.");
  Tensor<float> x(1, 3, 5, 5, 0.25f);
  const auto a = net.infer(x);
  const auto b = net2.infer(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);

  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes + "z"), ParseError);
  Sequential<float> wrong;
  wrong.add("conv", std::make_unique<Conv2d<float>>(3, 5, 3, 1, 1, true, other));
  EXPECT_THROW(load_state(back, wrong.state(), "net."), ParseError);
}
