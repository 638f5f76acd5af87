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

#include "equicascade/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "equicascade/error.hpp"
#include "equicascade/image_ops.hpp"

namespace equicascade::saliency {

template <typename T>
SaliencyMap grad_cam_network(nn::Sequential<T>& net, const nn::Tensor<T>& input, std::size_t layer_index) {
  if (layer_index >= net.size()) throw InvalidArgument("grad_cam: layer index out of range");
  if (input.n() != 1) throw InvalidArgument("grad_cam: expects a single input");
  std::vector<nn::Tensor<T>> outputs;
  const auto out = net.forward(input, nn::Mode::kEval, outputs);
  const nn::Tensor<T>& features = outputs[layer_index];
  if (features.h() * features.w() <= 1) {
    throw InvalidArgument("grad_cam: layer '" + net.name(layer_index) + "' has no spatial extent");
  }
  nn::Tensor<T> seed = nn::Tensor<T>::zeros_like(out);
  seed[0] = T(1);
  const auto grad = net.backward(seed, layer_index + 1);

  const int C = features.c();
  const int H = features.h();
  const int W = features.w();
  cv::Mat cam = cv::Mat::zeros(H, W, CV_64F);
  for (int c = 0; c < C; ++c) {
    double alpha = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) alpha += static_cast<double>(grad.at(0, c, y, x));
    }
    alpha /= static_cast<double>(H) * W;
    for (int y = 0; y < H; ++y) {
      auto* row = cam.ptr<double>(y);
      for (int x = 0; x < W; ++x) row[x] += alpha * static_cast<double>(features.at(0, c, y, x));
    }
  }
  double max_value = 0;
  for (int y = 0; y < H; ++y) {
    auto* row = cam.ptr<double>(y);
    for (int x = 0; x < W; ++x) {
      row[x] = std::max(0.0, row[x]);
      max_value = std::max(max_value, row[x]);
    }
  }
  if (max_value > 0) cam /= max_value;
  SaliencyMap map;
  map.heatmap = cam;
  map.target_layer = net.name(layer_index);
  return map;
}

template SaliencyMap grad_cam_network<float>(nn::Sequential<float>&, const nn::Tensor<float>&, std::size_t);
template SaliencyMap grad_cam_network<double>(nn::Sequential<double>&, const nn::Tensor<double>&, std::size_t);

SaliencyMap grad_cam(const cls::BinaryClassifier& clf, const cv::Mat& crop, const std::string& layer) {
  cls::BinaryClassifier copy = clf.clone();
  const std::string name = layer.empty() ? cls::default_cam_layer(copy.config()) : layer;
  auto& net = copy.network();
  const std::size_t index = net.index_of(name);
  if (index == net.size()) throw InvalidArgument("grad_cam: no layer named '" + name + "'");
  const int side = cls::network_side(copy.config().level);
  nn::Tensor<float> x(1, 3, side, side);
  copy.fill_input(crop, x.data());
  return grad_cam_network(net, x, index);
}

cv::Mat upsample(const SaliencyMap& map, int width, int height) { return resize_map(map.heatmap, width, height); }

double mass_inside(const SaliencyMap& map, int width, int height, const BoundingBox& box) {
  const cv::Mat up = upsample(map, width, height);
  double total = 0;
  double inside = 0;
  for (int y = 0; y < height; ++y) {
    const auto* row = up.ptr<double>(y);
    for (int x = 0; x < width; ++x) {
      total += row[x];
      // Pixel (x, y) covers [x, x+1) x [y, y+1); count it when its center is inside.
      const double cx = x + 0.5;
      const double cy = y + 0.5;
      if (cx >= box.x_min && cx < box.x_max && cy >= box.y_min && cy < box.y_max) inside += row[x];
    }
  }
  return total > 0 ? inside / total : 0.0;
}

cv::Mat overlay(const SaliencyMap& map, const cv::Mat& crop) {
  if (crop.empty() || crop.type() != CV_8UC3) throw InvalidArgument("overlay: crop must be 8-bit BGR");
  const cv::Mat up = upsample(map, crop.cols, crop.rows);
  cv::Mat gray;
  up.convertTo(gray, CV_8U, 255.0);
  cv::Mat heat;
  cv::applyColorMap(gray, heat, cv::COLORMAP_JET);
  cv::Mat out;
  cv::addWeighted(heat, kOverlayAlpha, crop, 1.0 - kOverlayAlpha, 0.0, out);
  return out;
}

namespace {

constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;
constexpr double kFontScale = 0.4;

}  // namespace

int row_label_width(const std::vector<std::string>& row_labels) {
  if (row_labels.empty()) return 0;
  int w = 0;
  for (const auto& l : row_labels) {
    int baseline = 0;
    w = std::max(w, cv::getTextSize(l, kFont, kFontScale, 1, &baseline).width);
  }
  return w + 2 * kGridGutter;
}

cv::Mat compose_grid(const std::vector<std::vector<cv::Mat>>& panels, const std::vector<std::string>& row_labels,
                     const std::vector<std::string>& col_labels) {
  if (panels.empty() || panels.front().empty()) throw InvalidArgument("compose_grid: empty grid");
  const std::size_t rows = panels.size();
  const std::size_t cols = panels.front().size();
  const cv::Size panel = panels.front().front().size();
  for (const auto& r : panels) {
    if (r.size() != cols) throw InvalidArgument("compose_grid: ragged grid");
    for (const auto& p : r) {
      if (p.size() != panel || p.type() != CV_8UC3) throw InvalidArgument("compose_grid: panels differ in size or type");
    }
  }
  if (!row_labels.empty() && row_labels.size() != rows) throw InvalidArgument("compose_grid: row label count");
  if (!col_labels.empty() && col_labels.size() != cols) throw InvalidArgument("compose_grid: column label count");

  const int left = row_label_width(row_labels);
  const int top = col_labels.empty() ? 0 : kGridLabelBand;
  const int width = left + static_cast<int>(cols) * panel.width + static_cast<int>(cols - 1) * kGridGutter;
  const int height = top + static_cast<int>(rows) * panel.height + static_cast<int>(rows - 1) * kGridGutter;
  cv::Mat grid(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = top + static_cast<int>(r) * (panel.height + kGridGutter);
    for (std::size_t c = 0; c < cols; ++c) {
      const int x = left + static_cast<int>(c) * (panel.width + kGridGutter);
      panels[r][c].copyTo(grid(cv::Rect(x, y, panel.width, panel.height)));
    }
    if (!row_labels.empty()) {
      cv::putText(grid, row_labels[r], cv::Point(kGridGutter, y + panel.height / 2 + 4), kFont, kFontScale,
                  cv::Scalar(0, 0, 0), 1, cv::LINE_8);
    }
  }
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    const int x = left + static_cast<int>(c) * (panel.width + kGridGutter);
    cv::putText(grid, col_labels[c], cv::Point(x + 2, kGridLabelBand - 5), kFont, kFontScale, cv::Scalar(0, 0, 0), 1,
                cv::LINE_8);
  }
  return grid;
}

void emit_grid(const std::filesystem::path& path, const std::vector<std::vector<cv::Mat>>& panels,
               const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels) {
  const cv::Mat grid = compose_grid(panels, row_labels, col_labels);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), grid)) throw Error("cannot write '" + path.string() + "'");
}

}  // namespace equicascade::saliency
