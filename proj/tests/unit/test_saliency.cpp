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

#include <random>

#include <opencv2/imgcodecs.hpp>

#include "equicascade/classifier.hpp"
#include "equicascade/error.hpp"
#include "equicascade/nn/layers.hpp"
#include "equicascade/saliency.hpp"
#include "oracles.hpp"

using namespace equicascade;
using namespace equicascade::saliency;

namespace {

// identity 1x1 conv -> global average pool -> linear with weights (2, -1)
nn::Sequential<double> toy_network() {
  Rng rng(1);
  nn::Sequential<double> net;
  auto conv = std::make_unique<nn::Conv2d<double>>(2, 2, 1, 1, 0, false, rng);
  auto& w = conv->parameters()[0]->value;
  w.fill(0);
  w[0] = 1;  // out 0 <- in 0
  w[3] = 1;  // out 1 <- in 1
  net.add("features", std::move(conv));
  net.add("gap", std::make_unique<nn::GlobalAvgPool<double>>());
  auto fc = std::make_unique<nn::Linear<double>>(2, 1, rng);
  auto params = fc->parameters();
  params[0]->value[0] = 2;
  params[0]->value[1] = -1;
  if (params.size() > 1) params[1]->value.fill(0);
  net.add("fc", std::move(fc));
  return net;
}

void expect_normalised(const cv::Mat& h) {
  double lo = 0, hi = 0;
  cv::minMaxLoc(h, &lo, &hi);
  EXPECT_GE(lo, 0.0);
  EXPECT_TRUE(hi == 0.0 || std::abs(hi - 1.0) < 1e-12) << hi;
}

}  // namespace

// Hand-derived map: weights are w_k / 9, map = relu(2 A0 - A1) / max.
TEST(GradCam, ToyNetworkExact) {
  auto net = toy_network();
  nn::Tensor<double> x(1, 2, 3, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  const SaliencyMap map = grad_cam_network(net, x, 0);
  ASSERT_EQ(map.heatmap.rows, 3);
  ASSERT_EQ(map.heatmap.cols, 3);
  EXPECT_EQ(map.target_layer, "features");
  std::vector<double> expect(9);
  double mx = 0;
  for (int i = 0; i < 9; ++i) {
    expect[static_cast<std::size_t>(i)] = std::max(0.0, (2 * x[static_cast<std::size_t>(i)] - x[9 + static_cast<std::size_t>(i)]) / 9);
    mx = std::max(mx, expect[static_cast<std::size_t>(i)]);
  }
  ASSERT_GT(mx, 0);
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(map.heatmap.at<double>(i / 3, i % 3), expect[static_cast<std::size_t>(i)] / mx, 1e-6);
  }
}

TEST(GradCam, ConstantFeaturesGiveConstantMap) {
  auto net = toy_network();
  nn::Tensor<double> x(1, 2, 4, 4);
  for (int i = 0; i < 16; ++i) {
    x[static_cast<std::size_t>(i)] = 0.7;
    x[16 + static_cast<std::size_t>(i)] = 0.2;
  }
  const cv::Mat h = grad_cam_network(net, x, 0).heatmap;
  double lo = 0, hi = 0;
  cv::minMaxLoc(h, &lo, &hi);
  EXPECT_NEAR(lo, hi, 1e-12);
  EXPECT_NEAR(hi, 1.0, 1e-12);

  // negative evidence everywhere rectifies to an all-zero map
  for (int i = 0; i < 16; ++i) x[static_cast<std::size_t>(i)] = -0.7;
  cv::minMaxLoc(grad_cam_network(net, x, 0).heatmap, &lo, &hi);
  EXPECT_EQ(hi, 0.0);
  EXPECT_EQ(lo, 0.0);
}

TEST(GradCam, NonNegativeAndMaxNormalisedOnRandomNetworks) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto family : {cls::Family::kDrml, cls::Family::kAlexnet}) {
    for (int trial = 0; trial < 6; ++trial) {
      auto cfg = cls::ClassifierConfig::for_level(family, cls::Level::kRegion);
      cfg.base_width = 3;
      Rng init(static_cast<std::uint64_t>(trial));
      auto net = cls::make_network<double>(cfg, init);
      nn::Tensor<double> x(1, 3, 64, 64);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
      const auto map = grad_cam_network(net, x, net.index_of(cls::default_cam_layer(cfg)));
      expect_normalised(map.heatmap);
      EXPECT_THROW(grad_cam_network(net, x, net.index_of("logit")), InvalidArgument);
    }
  }
}

TEST(GradCam, ClassifierWrapper) {
  auto cfg = cls::ClassifierConfig::for_level(cls::Family::kDrml, cls::Level::kRegion);
  cfg.base_width = 4;
  cfg.seed = 2;
  const auto clf = cls::build_classifier(cfg);
  cv::Mat crop(64, 64, CV_8UC3);
  cv::randu(crop, 0, 255);
  const double before = clf.predict(crop).probability;
  const auto map = grad_cam(clf, crop);
  EXPECT_EQ(map.target_layer, cls::default_cam_layer(cfg));
  expect_normalised(map.heatmap);
  EXPECT_EQ(clf.predict(crop).probability, before);
  EXPECT_THROW(grad_cam(clf, crop, "no-such-layer"), InvalidArgument);
  EXPECT_THROW(grad_cam(clf, crop, "gap"), InvalidArgument);
}

TEST(MassInside, UniformMapAndEmptyMap) {
  SaliencyMap map;
  map.heatmap = cv::Mat(8, 8, CV_64F, cv::Scalar(1.0));
  EXPECT_NEAR(mass_inside(map, 64, 64, {0, 0, 32, 64}), 0.5, 1e-9);
  EXPECT_NEAR(mass_inside(map, 64, 64, {0, 0, 64, 64}), 1.0, 1e-9);
  EXPECT_NEAR(mass_inside(map, 64, 64, {16, 16, 48, 48}), 0.25, 1e-9);
  map.heatmap = cv::Mat(8, 8, CV_64F, cv::Scalar(0.0));
  EXPECT_EQ(mass_inside(map, 64, 64, {0, 0, 32, 32}), 0.0);
  const cv::Mat up = upsample(map, 20, 10);
  EXPECT_EQ(up.cols, 20);
  EXPECT_EQ(up.rows, 10);
}

TEST(Overlay, DimensionsAndDeterminism) {
  SaliencyMap map;
  map.heatmap = cv::Mat(4, 4, CV_64F, cv::Scalar(0.0));
  map.heatmap.at<double>(1, 2) = 1.0;
  cv::Mat crop(64, 64, CV_8UC3, cv::Scalar(100, 100, 100));
  const cv::Mat a = overlay(map, crop);
  const cv::Mat b = overlay(map, crop);
  EXPECT_EQ(a.size(), crop.size());
  EXPECT_EQ(a.type(), CV_8UC3);
  EXPECT_EQ(cv::norm(a, b, cv::NORM_INF), 0.0);
  EXPECT_GT(cv::norm(a, crop, cv::NORM_INF), 0.0);
}

TEST(Grid, LayoutArithmetic) {
  std::vector<std::vector<cv::Mat>> panels(2, std::vector<cv::Mat>(4, cv::Mat(64, 64, CV_8UC3, cv::Scalar(9, 9, 9))));
  const cv::Mat bare = compose_grid(panels, {}, {});
  EXPECT_EQ(bare.cols, 4 * 64 + 3 * kGridGutter);
  EXPECT_EQ(bare.cols, 268);
  EXPECT_EQ(bare.rows, 2 * 64 + kGridGutter);
  EXPECT_EQ(bare.at<cv::Vec3b>(0, 64 + 1), cv::Vec3b(255, 255, 255));  // gutter
  EXPECT_EQ(bare.at<cv::Vec3b>(0, 68), cv::Vec3b(9, 9, 9));

  const std::vector<std::string> rows{"AU101 a", "AU101 b"};
  const cv::Mat labelled = compose_grid(panels, rows, {"c0", "c1", "c2", "c3"});
  EXPECT_EQ(labelled.cols, 268 + row_label_width(rows));
  EXPECT_EQ(labelled.rows, 132 + kGridLabelBand);
  EXPECT_GT(row_label_width(rows), 2 * kGridGutter);

  EXPECT_THROW(compose_grid({}, {}, {}), InvalidArgument);
  auto ragged = panels;
  ragged[1].pop_back();
  EXPECT_THROW(compose_grid(ragged, {}, {}), InvalidArgument);
  auto mixed = panels;
  mixed[0][0] = cv::Mat(32, 32, CV_8UC3);
  EXPECT_THROW(compose_grid(mixed, {}, {}), InvalidArgument);
  EXPECT_THROW(compose_grid(panels, {"one"}, {}), InvalidArgument);

  const auto path = oracle::scratch_dir("grid") / "sub" / "grid.png";
  emit_grid(path, panels, rows, {});
  EXPECT_EQ(cv::imread(path.string()).cols, 268 + row_label_width(rows));
}
