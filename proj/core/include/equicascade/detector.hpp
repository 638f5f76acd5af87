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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/checkpoint.hpp"
#include "equicascade/geometry.hpp"
#include "equicascade/nn/sequential.hpp"

namespace equicascade::roi {

/// Box prior, width and height in network-input pixels.
struct Anchor {
  double w = 0;
  double h = 0;
};

/// Six anchors sorted by area: [0, 3) belong to the stride-16 head,
/// [3, 6) to the stride-32 head.
using AnchorSet = std::array<Anchor, 6>;

inline constexpr int kAnchorsPerScale = 3;
inline constexpr int kOutputsPerAnchor = 5;  // tx, ty, tw, th, objectness
inline constexpr int kCoarseStride = 32;
inline constexpr int kFineStride = 16;

struct DetectorConfig {
  RegionKind kind = RegionKind::kFace;
  int input_size = 512;
  /// Channels of the first stage; each reduction stage doubles it, capped at 16x.
  int width = 16;
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double confidence_threshold = 0.25;
  double nms_threshold = 0.45;
  double box_weight = 1.0;
  double noobj_weight = 1.0;
  bool flip_augment = true;
  /// Random channel permutation, per-channel gain/offset and occasional
  /// inversion of each training image.
  bool color_augment = false;
  std::uint64_t seed = 0;
};

/// Shape-only IoU of two boxes sharing a center.
double shape_iou(double w1, double h1, double w2, double h2);

/// k-means over (w, h) pairs with 1 - IoU as the distance; deterministic
/// quantile initialisation. Result sorted by area.
AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& shapes, int iterations = 50);

/// Compact two-scale one-stage detector network. Seven 3x3 conv stages with
/// batch-norm and leaky-ReLU: stages 1-5 have stride 2 (reaching stride 32),
/// stages 6-7 keep stride 32. The stride-32 features feed the coarse head;
/// a 1x1 bridge upsampled x2 and concatenated with the stage-4 (stride-16)
/// features feeds the fine head.
template <typename T>
class DetectorNet {
 public:
  struct Output {
    nn::Tensor<T> coarse;  // (N, 15, S/32, S/32)
    nn::Tensor<T> fine;    // (N, 15, S/16, S/16)
  };

  DetectorNet(int width, std::uint64_t seed);
  DetectorNet(DetectorNet&&) noexcept = default;
  DetectorNet& operator=(DetectorNet&&) noexcept = default;

  Output forward(const nn::Tensor<T>& x, nn::Mode mode);
  Output infer(const nn::Tensor<T>& x) const;
  /// Accumulates parameter gradients for the given output gradients.
  void backward(const Output& grads);

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<nn::StateEntry<T>> state();
  void zero_grad();

 private:
  nn::Sequential<T> stem_;    // stride 16
  nn::Sequential<T> deep_;    // stride 32
  nn::Sequential<T> head_coarse_;
  nn::Sequential<T> bridge_;
  nn::Sequential<T> head_fine_;
  int stem_channels_ = 0;
  int bridge_channels_ = 0;
};

struct LossBreakdown {
  double total = 0;
  double objectness = 0;
  double box = 0;
};

template <typename T>
struct DetectorLoss {
  LossBreakdown value;
  typename DetectorNet<T>::Output grad;
};

/// One-stage detection loss for single-object images.
///
/// Anchor matching uses the shape IoU between ground truth and anchor: the
/// best anchor, and any anchor with IoU > 0.5, is positive at the cell
/// containing the box center; anchors with IoU in [0.4, 0.5] at that cell
/// are ignored; every other prediction is an objectness negative.
/// Loss = sum BCE(objectness) + box_weight * sum squared offset error,
/// divided by the batch size. `targets` are in network-input pixels.
template <typename T>
DetectorLoss<T> detector_loss(const typename DetectorNet<T>::Output& out, const std::vector<BoundingBox>& targets,
                              const AnchorSet& anchors, double box_weight, double noobj_weight);

/// One training example: an image and its single ground-truth box.
struct DetectorSample {
  cv::Mat image;
  BoundingBox box;
};

struct DetectorTrainingLog {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> step_loss;
};

class DetectorModel {
 public:
  DetectorModel(DetectorConfig config, AnchorSet anchors);

  const DetectorConfig& config() const { return config_; }
  const AnchorSet& anchors() const { return anchors_; }
  DetectorNet<float>& net() { return net_; }
  const DetectorNet<float>& net() const { return net_; }

  /// Subjects whose images trained this model (leakage bookkeeping).
  const std::set<std::string>& training_subjects() const { return training_subjects_; }
  void set_training_subjects(std::set<std::string> s) { training_subjects_ = std::move(s); }

  Checkpoint to_checkpoint() const;
  static DetectorModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static DetectorModel load(const std::filesystem::path& path);

 private:
  DetectorConfig config_;
  AnchorSet anchors_;
  DetectorNet<float> net_;
  std::set<std::string> training_subjects_;
};

/// Trains a detector from scratch. Throws InvalidArgument on an empty
/// dataset and TrainingError on a non-finite loss.
DetectorModel train_detector(const std::vector<DetectorSample>& dataset, const DetectorConfig& config,
                             DetectorTrainingLog* log = nullptr);

/// Runs the detector on an image of any size: the image is zero-padded to a
/// square and resized to the input size, predictions above the confidence
/// threshold are NMS-filtered and mapped back to (clipped) image coordinates.
/// Sorted by descending confidence.
std::vector<Detection> detect(const DetectorModel& model, const cv::Mat& image);

/// Mean IoU of the top detection against ground truth (0 for misses).
double mean_top_iou(const DetectorModel& model, const std::vector<DetectorSample>& samples);

}  // namespace equicascade::roi
