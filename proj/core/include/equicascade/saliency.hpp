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

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/classifier.hpp"
#include "equicascade/geometry.hpp"

namespace equicascade::saliency {

inline constexpr double kOverlayAlpha = 0.4;
inline constexpr int kGridGutter = 4;
inline constexpr int kGridLabelBand = 18;

struct SaliencyMap {
  /// CV_64F, dims of the target layer's feature map. Non-negative; the
  /// maximum is 1 unless the map is all zero.
  cv::Mat heatmap;
  std::string target_layer;
  std::string source;
};

/// Grad-CAM on an arbitrary network: channel weights are the spatially
/// averaged gradients of output 0 with respect to the output of layer
/// `layer_index`; the map is the rectified weighted channel sum,
/// max-normalised. Runs an eval-mode forward pass through `net`.
/// Throws InvalidArgument when that layer has no spatial extent.
template <typename T>
SaliencyMap grad_cam_network(nn::Sequential<T>& net, const nn::Tensor<T>& input, std::size_t layer_index);

/// Grad-CAM for the positive-class logit of a classifier. `layer` defaults
/// to the classifier's last convolution activation. The classifier itself
/// is not modified.
SaliencyMap grad_cam(const cls::BinaryClassifier& clf, const cv::Mat& crop, const std::string& layer = "");

/// Heatmap bilinearly upsampled to width x height.
cv::Mat upsample(const SaliencyMap& map, int width, int height);

/// Fraction of the upsampled heatmap mass inside `box` (crop pixels).
/// 0 for an all-zero map.
double mass_inside(const SaliencyMap& map, int width, int height, const BoundingBox& box);

/// JET colour map blended over the crop: out = 0.4 * heat + 0.6 * crop.
cv::Mat overlay(const SaliencyMap& map, const cv::Mat& crop);

/// Montage of equally sized panels with a label band above each column and
/// left of each row. Throws InvalidArgument on an empty or ragged matrix,
/// mismatched panel sizes or label counts.
cv::Mat compose_grid(const std::vector<std::vector<cv::Mat>>& panels, const std::vector<std::string>& row_labels,
                     const std::vector<std::string>& col_labels);

/// compose_grid written as PNG.
void emit_grid(const std::filesystem::path& path, const std::vector<std::vector<cv::Mat>>& panels,
               const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels);

/// Width of the row-label band for the given labels.
int row_label_width(const std::vector<std::string>& row_labels);

}  // namespace equicascade::saliency
