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

#include <opencv2/core.hpp>

#include "equicascade/geometry.hpp"

namespace equicascade {

/// Zero-padding applied on each side of an image.
struct PadSpec {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  friend bool operator==(const PadSpec&, const PadSpec&) = default;
};

struct PaddedImage {
  cv::Mat image;
  PadSpec pad;
};

/// Zero-pads `image` to max(H, W) on both sides, content centered. When the
/// padding is odd the extra row/column goes to the bottom/right.
PaddedImage pad_to_square(const cv::Mat& image);

/// Bilinear resize of a square 8-bit image to side x side. Sample positions
/// use pixel-center alignment; equal sizes return an exact copy.
cv::Mat resize_square(const cv::Mat& image, int side);

/// Bilinear resize of a single-channel CV_32F or CV_64F grid.
cv::Mat resize_map(const cv::Mat& map, int width, int height);

/// Affine mapping between a source image and a square, padded and resized
/// view of it: view = (source + pad_offset) * scale.
struct SquareView {
  PadSpec pad;
  double scale = 1.0;

  BoundingBox to_view(const BoundingBox& src) const;
  BoundingBox to_source(const BoundingBox& view) const;
};

/// pad_to_square + resize_square, returning the mapping used.
cv::Mat square_view(const cv::Mat& image, int side, SquareView* mapping = nullptr);

/// Writes an 8-bit BGR image into planar CHW layout scaled to [-0.5, 0.5].
template <typename T>
void image_to_chw(const cv::Mat& image, T* out) {
  const int h = image.rows;
  const int w = image.cols;
  const int c = image.channels();
  for (int y = 0; y < h; ++y) {
    const auto* row = image.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        out[(static_cast<std::size_t>(k) * h + y) * w + x] =
            static_cast<T>(row[x * c + k]) / T(255) - T(0.5);
      }
    }
  }
}

}  // namespace equicascade
