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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/checkpoint.hpp"
#include "equicascade/nn/sequential.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::cls {

enum class Family { kDrml, kAlexnet };
enum class Level { kFrame, kFace, kRegion };

std::string_view to_string(Family family);
std::string_view to_string(Level level);
std::optional<Family> parse_family(std::string_view name);
/// Accepts "frame", "face" and "region".
std::optional<Level> parse_level(std::string_view name);

/// Side of the crop handed to a classifier: 64 for regions, 512 for faces
/// and 176 for whole frames (padded to square and resized directly).
int crop_side(Level level);
/// Side the network sees: 64 for regions, 176 otherwise.
int network_side(Level level);

struct ClassifierConfig {
  Family family = Family::kDrml;
  Level level = Level::kRegion;
  int input_side = 64;
  /// Channel count of the first convolution; deeper layers scale from it.
  int base_width = 32;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// Stop after this many epochs without a better validation F1.
  int patience = 20;
  bool flip_augment = true;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  /// Config for `level` with the matching input side.
  static ClassifierConfig for_level(Family family, Level level);
  /// Throws InvalidArgument for inconsistent settings.
  void validate() const;
};

/// "drml-region-64", "alexnet-face-512", ...
std::string architecture_descriptor(const ClassifierConfig& config);

/// Modified DRML. Region level: conv5x5 -> bn/relu -> conv3x3 (in place of
/// the region layer) -> pool -> conv3x3 -> pool -> conv3x3 -> pool -> global
/// average pool -> fc -> logit. Frame and face level: conv11x11 stride 4
/// followed by an 8x8 region layer, then the same trunk.
template <typename T>
nn::Sequential<T> make_drml_network(const ClassifierConfig& config, Rng& rng);

/// AlexNet-style network with batch-norm and a single logit. Region level
/// uses a 5x5 stride-2 first convolution sized for 64x64 input.
template <typename T>
nn::Sequential<T> make_alexnet_network(const ClassifierConfig& config, Rng& rng);

template <typename T>
nn::Sequential<T> make_network(const ClassifierConfig& config, Rng& rng);

/// Name of the layer whose output Grad-CAM uses by default: the activation
/// of the last convolution.
std::string default_cam_layer(const ClassifierConfig& config);

struct Prediction {
  double probability = 0;
  bool decision = false;
};

/// One training or evaluation example.
struct LabeledImage {
  cv::Mat image;
  bool positive = false;
  std::string subject_id;
  std::string sample_id;
};

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0;
  double val_acc = 0;
  double val_f1 = 0;
};

struct TrainingCurve {
  std::vector<CurvePoint> points;
  int best_epoch = -1;

  /// Header "epoch,train_loss,val_acc,val_f1".
  void write_csv(const std::filesystem::path& path) const;
};

class BinaryClassifier {
 public:
  explicit BinaryClassifier(ClassifierConfig config);
  BinaryClassifier(BinaryClassifier&&) noexcept = default;
  BinaryClassifier& operator=(BinaryClassifier&&) noexcept = default;

  const ClassifierConfig& config() const { return config_; }
  std::string descriptor() const { return architecture_descriptor(config_); }
  nn::Sequential<float>& network() { return net_; }
  const nn::Sequential<float>& network() const { return net_; }
  double threshold() const { return config_.threshold; }

  const std::set<std::string>& training_subjects() const { return training_subjects_; }
  void set_training_subjects(std::set<std::string> s) { training_subjects_ = std::move(s); }

  /// Accepts crops of the configured input side, or already at the network
  /// side; anything else throws InvalidArgument.
  cv::Mat to_network_input(const cv::Mat& crop) const;
  void fill_input(const cv::Mat& crop, float* chw) const;

  /// decision = probability >= threshold.
  Prediction predict(const cv::Mat& crop) const;
  std::vector<double> probabilities(const std::vector<cv::Mat>& crops, int workers = 1) const;

  Checkpoint to_checkpoint() const;
  static BinaryClassifier from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static BinaryClassifier load(const std::filesystem::path& path);
  /// Deep copy through the checkpoint encoding.
  BinaryClassifier clone() const;

 private:
  ClassifierConfig config_;
  nn::Sequential<float> net_;
  std::set<std::string> training_subjects_;
};

BinaryClassifier build_drml(ClassifierConfig config);
BinaryClassifier build_alexnet(ClassifierConfig config);
BinaryClassifier build_classifier(const ClassifierConfig& config);

/// Trains with SGD and binary cross-entropy, evaluates on `val` after every
/// epoch and leaves `clf` holding the weights with the best validation F1
/// (earliest epoch on ties). Throws InvalidArgument on empty sets and
/// TrainingError on a non-finite loss.
TrainingCurve train_binary(BinaryClassifier& clf, const std::vector<LabeledImage>& train,
                           const std::vector<LabeledImage>& val, int workers = 1);

}  // namespace equicascade::cls
