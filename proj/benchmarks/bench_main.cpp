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

#include <benchmark/benchmark.h>

#include <random>

#include "equicascade/classifier.hpp"
#include "equicascade/detector.hpp"
#include "equicascade/geometry.hpp"
#include "equicascade/nn/layers.hpp"

using namespace equicascade;

namespace {

void BM_Conv3x3Forward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  Rng rng(1);
  nn::Conv2d<float> conv(ch, ch, 3, 1, 1, false, rng);
  nn::Tensor<float> x(8, ch, side, side, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(conv.infer(x));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 32})->Args({32, 32})->Args({32, 64});

void BM_ConvTrainStep(benchmark::State& state) {
  Rng rng(2);
  nn::Conv2d<float> conv(16, 32, 3, 1, 1, false, rng);
  nn::Tensor<float> x(8, 16, 32, 32, 0.25f);
  for (auto _ : state) {
    auto y = conv.forward(x, nn::Mode::kTrain);
    benchmark::DoNotOptimize(conv.backward(y));
  }
}
BENCHMARK(BM_ConvTrainStep);

std::vector<Detection> random_detections(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 400), size(10, 80), conf(0, 1);
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    dets.push_back({{x, y, x + size(rng), y + size(rng)}, conf(rng), RegionKind::kFace});
  }
  return dets;
}

void BM_Nms(benchmark::State& state) {
  const auto dets = random_detections(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(nms(dets, 0.45));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Nms)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_Detect(benchmark::State& state) {
  roi::DetectorConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  cfg.width = 8;
  std::vector<std::pair<double, double>> shapes;
  for (int i = 1; i <= 24; ++i) shapes.emplace_back(8.0 * i, 10.0 * i);
  const roi::DetectorModel model(cfg, roi::kmeans_anchors(shapes));
  cv::Mat frame(256, 320, CV_8UC3);
  cv::randu(frame, 0, 255);
  for (auto _ : state) benchmark::DoNotOptimize(roi::detect(model, frame));
}
BENCHMARK(BM_Detect)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ClassifierPredict(benchmark::State& state) {
  auto cfg = cls::ClassifierConfig::for_level(state.range(0) == 0 ? cls::Family::kDrml : cls::Family::kAlexnet,
                                              cls::Level::kRegion);
  cfg.base_width = 8;
  const auto clf = cls::build_classifier(cfg);
  cv::Mat crop(64, 64, CV_8UC3, cv::Scalar(90, 120, 150));
  for (auto _ : state) benchmark::DoNotOptimize(clf.predict(crop));
}
BENCHMARK(BM_ClassifierPredict)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
