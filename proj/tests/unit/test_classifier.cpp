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

#include "equicascade/cascade.hpp"
#include "equicascade/classifier.hpp"
#include "equicascade/error.hpp"
#include "equicascade/synth.hpp"
#include "oracles.hpp"

using namespace equicascade;
using namespace equicascade::cls;

namespace {

ClassifierConfig small_config(Family family, Level level) {
  auto c = ClassifierConfig::for_level(family, level);
  c.base_width = 2;
  c.seed = 4;
  return c;
}

// Finite differences of BCE through the whole network, five probes per
// parameter tensor.
void check_network_gradients(Family family, Level level) {
  const auto cfg = small_config(family, level);
  Rng init(9);
  auto net = make_network<double>(cfg, init);
  const int side = network_side(level);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  nn::Tensor<double> x(2, 3, side, side);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  const std::vector<double> targets{1, 0};
  auto loss = [&] { return nn::bce_with_logits(net.forward(x, nn::Mode::kTrain), targets).loss; };

  net.zero_grad();
  const auto res = nn::bce_with_logits(net.forward(x, nn::Mode::kTrain), targets);
  net.backward(res.grad);
  int resolved = 0;
  for (auto* p : net.parameters()) {
    std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
    for (int k = 0; k < 5; ++k) {
      const std::size_t i = pick(rng);
      const double analytic = p->grad[i];
      const double num = oracle::central_difference(loss, p->value[i], 1e-6);
      // below ~1e-9 the difference is loss roundoff
      if (std::abs(analytic - num) > 1e-9) {
        EXPECT_LT(oracle::relative_error(analytic, num), 1e-3)
            << architecture_descriptor(cfg) << " " << p->name << "[" << i << "]";
      }
      resolved += std::abs(num) > 1e-6;
    }
  }
  EXPECT_GT(resolved, static_cast<int>(net.parameters().size()));
}

std::vector<LabeledImage> eye_crops(int n_per_class, double contrast, std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.image_width = spec.image_height = 128;
  spec.glyph_contrast = contrast;
  const auto corpus = synth::generate_corpus(spec, {AuCode("AU101")}, n_per_class, seed);
  std::vector<LabeledImage> out;
  for (const auto& f : corpus.frames) {
    out.push_back({roi::crop_region(f.image, f.eye, 64, RegionKind::kEye).image, f.label == AuCode("AU101"),
                   f.subject_id, f.clip_id});
  }
  return out;
}

}  // namespace

TEST(ClassifierGrad, DrmlRegion) { check_network_gradients(Family::kDrml, Level::kRegion); }
TEST(ClassifierGrad, DrmlFrameWithRegionLayer) { check_network_gradients(Family::kDrml, Level::kFrame); }
TEST(ClassifierGrad, AlexnetRegion) { check_network_gradients(Family::kAlexnet, Level::kRegion); }
TEST(ClassifierGrad, AlexnetFrame) { check_network_gradients(Family::kAlexnet, Level::kFrame); }

TEST(Architecture, ShapesAndDescriptors) {
  for (auto family : {Family::kDrml, Family::kAlexnet}) {
    const auto region = ClassifierConfig::for_level(family, Level::kRegion);
    EXPECT_EQ(region.input_side, 64);
    Rng rng(1);
    auto net = make_network<float>(region, rng);
    const auto& first = net.parameters().front()->value;
    EXPECT_EQ(first.h(), 5);
    EXPECT_EQ(first.w(), 5);
    nn::Tensor<float> x(3, 3, 64, 64, 0.2f);
    EXPECT_EQ(net.infer(x).dims(), (std::array<int, 4>{3, 1, 1, 1}));
    EXPECT_NE(net.index_of(default_cam_layer(region)), net.size());

    auto frame_cfg = ClassifierConfig::for_level(family, Level::kFrame);
    auto frame_net = make_network<float>(frame_cfg, rng);
    nn::Tensor<float> big(1, 3, 176, 176, 0.2f);
    EXPECT_EQ(frame_net.infer(big).dims(), (std::array<int, 4>{1, 1, 1, 1}));
    if (family == Family::kAlexnet) EXPECT_LT(net.parameter_count(), frame_net.parameter_count());
  }
  EXPECT_EQ(architecture_descriptor(ClassifierConfig::for_level(Family::kAlexnet, Level::kFace)), "alexnet-face-512");
  EXPECT_EQ(crop_side(Level::kFrame), 176);
  EXPECT_EQ(network_side(Level::kFace), 176);
  EXPECT_EQ(parse_level("region"), Level::kRegion);
  EXPECT_FALSE(parse_family("vgg").has_value());

  auto bad = ClassifierConfig::for_level(Family::kDrml, Level::kRegion);
  bad.input_side = 512;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = ClassifierConfig::for_level(Family::kDrml, Level::kRegion);
  bad.threshold = 1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(BinaryClassifier, PredictionConventions) {
  auto cfg = small_config(Family::kDrml, Level::kRegion);
  const BinaryClassifier clf = build_classifier(cfg);
  cv::Mat crop(64, 64, CV_8UC3);
  cv::randu(crop, 0, 255);
  const Prediction p = clf.predict(crop);
  EXPECT_GE(p.probability, 0.0);
  EXPECT_LE(p.probability, 1.0);
  EXPECT_EQ(p.decision, p.probability >= clf.threshold());
  EXPECT_EQ(clf.predict(crop).probability, p.probability);
  const auto batch = clf.probabilities({crop, crop, crop}, 2);
  for (double q : batch) EXPECT_NEAR(q, p.probability, 1e-6);
  EXPECT_THROW(clf.predict(cv::Mat(32, 32, CV_8UC3)), InvalidArgument);
  EXPECT_THROW(clf.predict(cv::Mat(64, 48, CV_8UC3)), InvalidArgument);

  cfg.threshold = 1e-9;
  const BinaryClassifier eager = build_classifier(cfg);
  EXPECT_TRUE(eager.predict(crop).decision);
}

TEST(BinaryClassifier, CheckpointRoundTripAndMismatch) {
  auto cfg = small_config(Family::kAlexnet, Level::kRegion);
  BinaryClassifier clf = build_classifier(cfg);
  clf.set_training_subjects({"H1", "H3"});
  const auto path = oracle::scratch_dir("classifier_ckpt") / "clf.eqck";
  clf.save(path);
  const BinaryClassifier back = BinaryClassifier::load(path);
  EXPECT_EQ(back.descriptor(), "alexnet-region-64");
  EXPECT_EQ(back.config().base_width, 2);
  EXPECT_EQ(back.training_subjects(), clf.training_subjects());
  cv::Mat crop(64, 64, CV_8UC3, cv::Scalar(30, 90, 150));
  EXPECT_EQ(back.predict(crop).probability, clf.predict(crop).probability);
  EXPECT_EQ(clf.clone().predict(crop).probability, clf.predict(crop).probability);

  Checkpoint ckpt = clf.to_checkpoint();
  for (auto& a : ckpt.arrays) {
    if (a.name.find("conv2") != std::string::npos) {
      a.dims[0] += 1;
      a.values.resize(a.values.size() + a.values.size() / static_cast<std::size_t>(a.dims[0] - 1));
      break;
    }
  }
  EXPECT_THROW(BinaryClassifier::from_checkpoint(ckpt), ParseError);
}

TEST(TrainBinary, LearnsEasyContrastAndIsDeterministic) {
  const auto train = eye_crops(12, 1.0, 1);
  const auto val = eye_crops(4, 1.0, 2);
  auto cfg = ClassifierConfig::for_level(Family::kDrml, Level::kRegion);
  cfg.base_width = 8;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.02;
  cfg.patience = 30;
  cfg.seed = 1;
  BinaryClassifier clf = build_classifier(cfg);
  const auto curve = train_binary(clf, train, val);
  ASSERT_FALSE(curve.points.empty());
  ASSERT_GE(curve.best_epoch, 0);
  int correct = 0;
  for (const auto& s : train) correct += clf.predict(s.image).decision == s.positive;
  EXPECT_GE(correct, static_cast<int>(train.size()) * 9 / 10);
  EXPECT_GT(curve.points.front().train_loss, curve.points.back().train_loss);

  BinaryClassifier again = build_classifier(cfg);
  const auto curve2 = train_binary(again, train, val, 3);
  ASSERT_EQ(curve2.points.size(), curve.points.size());
  for (std::size_t i = 0; i < curve.points.size(); ++i) EXPECT_EQ(curve2.points[i].train_loss, curve.points[i].train_loss);

  EXPECT_THROW(train_binary(clf, {}, val), InvalidArgument);
}
