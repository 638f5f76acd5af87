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

#include "equicascade/error.hpp"
#include "equicascade/geometry.hpp"
#include "equicascade/image_ops.hpp"
#include "oracles.hpp"

using namespace equicascade;

namespace {

BoundingBox random_box(std::mt19937_64& rng, double extent, double min_side = 0.5) {
  std::uniform_real_distribution<double> u(0.0, extent);
  for (;;) {
    double x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    if (x1 - x0 >= min_side && y1 - y0 >= min_side) return {x0, y0, x1, y1};
  }
}

}  // namespace

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 50.0 / 150.0, 1e-12);
  EXPECT_NEAR(oracle::raster_iou({0, 0, 10, 10}, {5, 0, 15, 10}, 16, 4), 50.0 / 150.0, 1e-12);
}

// Rasterized pixel-count oracle on random boxes.
TEST(Iou, MatchesRasterOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coord(0, 31);
  int checked = 0;
  while (checked < 1000) {
    int a0 = coord(rng), a1 = coord(rng), a2 = coord(rng), a3 = coord(rng);
    int b0 = coord(rng), b1 = coord(rng), b2 = coord(rng), b3 = coord(rng);
    if (a0 == a2 || a1 == a3 || b0 == b2 || b1 == b3) continue;
    const BoundingBox a{double(std::min(a0, a2)), double(std::min(a1, a3)), double(std::max(a0, a2)),
                        double(std::max(a1, a3))};
    const BoundingBox b{double(std::min(b0, b2)), double(std::min(b1, b3)), double(std::max(b0, b2)),
                        double(std::max(b1, b3))};
    ASSERT_NEAR(iou(a, b), oracle::raster_iou(a, b, 32, 1), 1e-3) << checked;
    ++checked;
  }
  // quarter-pixel boxes against a 4-cells-per-pixel raster
  auto quarter = [&](const BoundingBox& b) {
    return BoundingBox{std::round(b.x_min * 4) / 4, std::round(b.y_min * 4) / 4, std::round(b.x_max * 4) / 4,
                       std::round(b.y_max * 4) / 4};
  };
  for (int i = 0; i < 1000; ++i) {
    const auto a = quarter(random_box(rng, 24, 1.0));
    const auto b = quarter(random_box(rng, 24, 1.0));
    ASSERT_NEAR(iou(a, b), oracle::raster_iou(a, b, 24, 4), 1e-3);
  }
}

TEST(Iou, Properties) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_box(rng, 100);
    const auto b = random_box(rng, 100);
    const double v = iou(a, b);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_DOUBLE_EQ(v, iou(b, a));
    ASSERT_NEAR(iou(a, a), 1.0, 1e-12);
    ASSERT_NEAR(v, oracle::plain_iou(a, b), 1e-12);
  }
}

TEST(Nms, Examples) {
  const Detection d{{0, 0, 10, 10}, 0.9, RegionKind::kFace};
  auto one = nms({d}, 0.45);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].box, d.box);

  // IoU 0.9: 10x10 vs 10x9 sharing 90 pixels
  const Detection hi{{0, 0, 10, 10}, 0.8, RegionKind::kFace};
  const Detection lo{{0, 0, 10, 9}, 0.6, RegionKind::kFace};
  auto two = nms({lo, hi}, 0.45);
  ASSERT_EQ(two.size(), 1u);
  EXPECT_DOUBLE_EQ(two[0].confidence, 0.8);
}

TEST(Nms, MatchesQuadraticOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(0, 50);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::uniform_real_distribution<double> thr(0.05, 0.95);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Detection> dets;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      // coarse confidences force ties
      const double c = trial % 3 == 0 ? std::round(conf(rng) * 5) / 5 : conf(rng);
      dets.push_back({random_box(rng, 60, 4.0), c, RegionKind::kFace});
    }
    const double t = thr(rng);
    const auto got = nms(dets, t);
    const auto want = oracle::quadratic_nms(dets, t);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].box, want[i].box) << "trial " << trial;
      ASSERT_EQ(got[i].confidence, want[i].confidence);
    }
    for (std::size_t i = 1; i < got.size(); ++i) ASSERT_GE(got[i - 1].confidence, got[i].confidence);
  }
}

TEST(ClipBox, ClampsToImage) {
  const auto b = clip_box({-5, -1, 300, 50}, 256, 40);
  EXPECT_EQ(b, (BoundingBox{0, 0, 256, 40}));
  EXPECT_FALSE(intersect({0, 0, 1, 1}, {2, 2, 3, 3}).has_value());
  EXPECT_EQ(*intersect({0, 0, 4, 4}, {2, 1, 6, 3}), (BoundingBox{2, 1, 4, 3}));
}

TEST(PadToSquare, CenteredWithBottomRightTieBreak) {
  cv::Mat wide(50, 100, CV_8UC3, cv::Scalar(7, 7, 7));
  auto p = pad_to_square(wide);
  EXPECT_EQ(p.image.rows, 100);
  EXPECT_EQ(p.image.cols, 100);
  EXPECT_EQ(p.pad.top, 25);
  EXPECT_EQ(p.pad.bottom, 25);
  EXPECT_EQ(p.pad.left, 0);
  EXPECT_EQ(p.image.at<cv::Vec3b>(10, 50), cv::Vec3b(0, 0, 0));
  EXPECT_EQ(p.image.at<cv::Vec3b>(50, 50), cv::Vec3b(7, 7, 7));

  cv::Mat tall(100, 50, CV_8UC3, cv::Scalar(1, 2, 3));
  p = pad_to_square(tall);
  EXPECT_EQ(p.pad.left, 25);
  EXPECT_EQ(p.pad.right, 25);

  cv::Mat odd(7, 4, CV_8UC3, cv::Scalar(9, 9, 9));
  p = pad_to_square(odd);
  EXPECT_EQ(p.image.cols, 7);
  EXPECT_EQ(p.pad.left, 1);
  EXPECT_EQ(p.pad.right, 2);

  cv::Mat square(64, 64, CV_8UC3, cv::Scalar(4, 5, 6));
  p = pad_to_square(square);
  EXPECT_EQ(p.pad, PadSpec{});
  EXPECT_EQ(cv::norm(p.image, square, cv::NORM_INF), 0.0);
}

TEST(ResizeSquare, IdentityConstantAndErrors) {
  cv::Mat img(64, 64, CV_8UC3);
  cv::randu(img, 0, 255);
  const cv::Mat same = resize_square(img, 64);
  EXPECT_EQ(cv::norm(same, img, cv::NORM_INF), 0.0);

  cv::Mat flat(100, 100, CV_8UC3, cv::Scalar(33, 66, 99));
  const cv::Mat small = resize_square(flat, 64);
  EXPECT_EQ(small.rows, 64);
  EXPECT_EQ(cv::norm(small, cv::Mat(64, 64, CV_8UC3, cv::Scalar(33, 66, 99)), cv::NORM_INF), 0.0);

  EXPECT_THROW(resize_square(cv::Mat(10, 20, CV_8UC3), 8), Error);

  const cv::Mat big = resize_square(img, 512);
  EXPECT_EQ(big.rows, 512);
  EXPECT_EQ(cv::norm(big, resize_square(img, 512), cv::NORM_INF), 0.0);
}
