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

#include "equicascade/detector.hpp"
#include "equicascade/error.hpp"
#include "equicascade/synth.hpp"
#include "oracles.hpp"

using namespace equicascade;
using namespace equicascade::roi;

namespace {

nn::Tensor<double> random_input(int n, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  nn::Tensor<double> x(n, 3, side, side);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  return x;
}

AnchorSet probe_anchors() { return {{{6, 8}, {10, 12}, {16, 14}, {22, 26}, {30, 34}, {40, 44}}}; }

std::vector<DetectorSample> synth_faces(int n_per_class, int image_side, std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.image_width = spec.image_height = image_side;
  const auto corpus = synth::generate_corpus(spec, {AuCode("AU101")}, n_per_class, seed);
  std::vector<DetectorSample> out;
  for (const auto& f : corpus.frames) out.push_back({f.image, f.face});
  return out;
}

}  // namespace

TEST(Anchors, ShapeIouAndKmeans) {
  EXPECT_DOUBLE_EQ(shape_iou(4, 4, 4, 4), 1.0);
  EXPECT_NEAR(shape_iou(4, 4, 2, 2), 0.25, 1e-12);
  EXPECT_NEAR(shape_iou(4, 2, 2, 4), 4.0 / 12.0, 1e-12);

  std::vector<std::pair<double, double>> same(20, {30.0, 40.0});
  for (const auto& a : kmeans_anchors(same)) {
    EXPECT_DOUBLE_EQ(a.w, 30.0);
    EXPECT_DOUBLE_EQ(a.h, 40.0);
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(5, 200);
  std::vector<std::pair<double, double>> shapes;
  for (int i = 0; i < 300; ++i) shapes.emplace_back(u(rng), u(rng));
  const auto anchors = kmeans_anchors(shapes);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    EXPECT_LE(anchors[i - 1].w * anchors[i - 1].h, anchors[i].w * anchors[i].h);
  }
  EXPECT_EQ(kmeans_anchors(shapes)[3].w, anchors[3].w);
}

TEST(DetectorNet, OutputGridsAtStrides32And16) {
  DetectorNet<float> net(4, 1);
  nn::Tensor<float> x(2, 3, 128, 128, 0.1f);
  const auto out = net.infer(x);
  EXPECT_EQ(out.coarse.dims(), (std::array<int, 4>{2, 15, 4, 4}));
  EXPECT_EQ(out.fine.dims(), (std::array<int, 4>{2, 15, 8, 8}));
}

// dLoss/dOutputs against central differences, including matched anchor cells.
TEST(DetectorLossGrad, OutputsMatchFiniteDifferences) {
  DetectorNet<double> net(2, 7);
  const auto x = random_input(2, 64, 3);
  auto out = net.forward(x, nn::Mode::kEval);
  const std::vector<BoundingBox> targets{{10, 12, 40, 50}, {20, 5, 52, 30}};
  const auto anchors = probe_anchors();
  const auto res = detector_loss<double>(out, targets, anchors, 1.0, 1.0);
  auto loss = [&] { return detector_loss<double>(out, targets, anchors, 1.0, 1.0).value.total; };

  int checked_positive = 0;
  for (auto [pred, grad] : {std::pair{&out.coarse, &res.grad.coarse}, std::pair{&out.fine, &res.grad.fine}}) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> pick(0, pred->size() - 1);
    std::vector<std::size_t> probes;
    for (std::size_t i = 0; i < pred->size(); ++i) {
      // box offsets only carry gradient at matched anchors
      const int channel = static_cast<int>((i / pred->plane()) % 15);
      if (channel % 5 != 4 && (*grad)[i] != 0.0) probes.push_back(i);
    }
    checked_positive += static_cast<int>(probes.size());
    for (int k = 0; k < 12; ++k) probes.push_back(pick(rng));
    for (auto i : probes) {
      const double num = oracle::central_difference(loss, (*pred)[i], 1e-6);
      EXPECT_LT(oracle::relative_error((*grad)[i], num), 1e-3) << i;
    }
  }
  EXPECT_GT(checked_positive, 0);
  EXPECT_GT(res.value.objectness, 0);
  EXPECT_GT(res.value.box, 0);
}

// Parameter gradients of the whole detector through the loss.
TEST(DetectorLossGrad, ParametersMatchFiniteDifferences) {
  DetectorNet<double> net(2, 11);
  const auto x = random_input(2, 64, 4);
  const std::vector<BoundingBox> targets{{8, 8, 30, 36}, {30, 20, 60, 60}};
  const auto anchors = probe_anchors();
  auto loss = [&] {
    const auto out = net.forward(x, nn::Mode::kTrain);
    return detector_loss<double>(out, targets, anchors, 1.0, 1.0).value.total;
  };
  net.zero_grad();
  const auto out = net.forward(x, nn::Mode::kTrain);
  const auto res = detector_loss<double>(out, targets, anchors, 1.0, 1.0);
  net.backward(res.grad);
  auto params = net.parameters();
  std::mt19937_64 rng(6);
  int probes = 0;
  int resolved = 0;
  for (std::size_t p = 0; p < params.size(); p += 3) {
    std::uniform_int_distribution<std::size_t> pick(0, params[p]->value.size() - 1);
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = pick(rng);
      const double analytic = params[p]->grad[i];
      const double num = oracle::central_difference(loss, params[p]->value[i], 1e-6);
      // the loss is O(1-10), so differences carry ~1e-9 of roundoff
      if (std::abs(num) > 1e-5) ++resolved;
      if (std::abs(analytic - num) > 1e-8) {
        EXPECT_LT(oracle::relative_error(analytic, num), 1e-3) << params[p]->name << "[" << i << "]";
      }
      ++probes;
    }
  }
  EXPECT_GE(resolved, probes / 2);
}

TEST(TrainDetector, EmptyDatasetThrows) {
  DetectorConfig cfg;
  EXPECT_THROW(train_detector({}, cfg), InvalidArgument);
}

// 16-image overfit probe: full-batch loss falls step after step at the start
// and the model then localises its own training faces.
TEST(TrainDetector, OverfitProbe) {
  const auto samples = synth_faces(8, 128, 1);
  ASSERT_EQ(samples.size(), 16u);
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width = 4;
  cfg.epochs = 150;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.flip_augment = false;
  cfg.seed = 3;
  DetectorTrainingLog log;
  const auto model = train_detector(samples, cfg, &log);
  ASSERT_EQ(log.epoch_loss.size(), 150u);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_LT(log.step_loss[i], log.step_loss[i - 1]) << "step " << i;
  EXPECT_GE(mean_top_iou(model, samples), 0.9);

  // deterministic given the seed
  DetectorTrainingLog again;
  train_detector(samples, cfg, &again);
  EXPECT_EQ(again.step_loss, log.step_loss);
}

TEST(TrainDetector, ColorAugmentIsSeededAndActive) {
  const auto samples = synth_faces(4, 128, 4);
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width = 2;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 8;
  DetectorTrainingLog plain, a, b;
  train_detector(samples, cfg, &plain);
  cfg.color_augment = true;
  train_detector(samples, cfg, &a);
  train_detector(samples, cfg, &b);
  EXPECT_EQ(a.step_loss, b.step_loss);
  EXPECT_NE(a.step_loss, plain.step_loss);
  for (double l : a.step_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Detect, BlankImageAndBounds) {
  const auto samples = synth_faces(4, 128, 2);
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width = 4;
  cfg.epochs = 1;
  const DetectorModel model = train_detector(samples, cfg);
  const cv::Mat blank = cv::Mat::zeros(100, 180, CV_8UC3);
  EXPECT_TRUE(detect(model, blank).empty());

  DetectorConfig loose = cfg;
  loose.confidence_threshold = 1e-4;
  DetectorModel permissive(loose, model.anchors());
  load_state(model.to_checkpoint(), permissive.net().state(), "net.");
  cv::Mat noise(90, 170, CV_8UC3);
  cv::randu(noise, 0, 255);
  const auto dets = detect(permissive, noise);
  ASSERT_FALSE(dets.empty());
  for (const auto& d : dets) {
    EXPECT_GE(d.box.x_min, 0);
    EXPECT_GE(d.box.y_min, 0);
    EXPECT_LE(d.box.x_max, 170);
    EXPECT_LE(d.box.y_max, 90);
    EXPECT_GE(d.confidence, 0);
    EXPECT_LE(d.confidence, 1);
  }
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].confidence, dets[i].confidence);
}

TEST(DetectorModel, CheckpointRoundTrip) {
  const auto samples = synth_faces(4, 128, 3);
  DetectorConfig cfg;
  cfg.kind = RegionKind::kEye;
  cfg.input_size = 64;
  cfg.width = 4;
  cfg.epochs = 2;
  cfg.confidence_threshold = 1e-3;
  DetectorModel model = train_detector(samples, cfg);
  model.set_training_subjects({"H1", "H2"});
  const auto path = oracle::scratch_dir("detector_ckpt") / "eye.eqck";
  model.save(path);
  const DetectorModel back = DetectorModel::load(path);
  EXPECT_EQ(back.config().kind, RegionKind::kEye);
  EXPECT_EQ(back.config().input_size, 64);
  EXPECT_EQ(back.training_subjects(), model.training_subjects());
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back.anchors()[i].w, model.anchors()[i].w);
  const auto a = detect(model, samples[0].image);
  const auto b = detect(back, samples[0].image);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].box, b[i].box);
    EXPECT_EQ(a[i].confidence, b[i].confidence);
  }
}
