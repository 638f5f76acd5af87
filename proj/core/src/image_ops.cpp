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

#include "equicascade/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "equicascade/error.hpp"

namespace equicascade {
namespace {

struct Tap {
  int i0;
  int i1;
  double w1;
};

// Pixel-center aligned source taps for each destination index.
std::vector<Tap> make_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {i0, i1, s - i0};
  }
  return taps;
}

template <typename T>
cv::Mat resize_impl(const cv::Mat& src, int width, int height, int type) {
  const int ch = src.channels();
  cv::Mat dst(height, width, type);
  const auto xt = make_taps(src.cols, width);
  const auto yt = make_taps(src.rows, height);
  for (int y = 0; y < height; ++y) {
    const Tap& ty = yt[static_cast<std::size_t>(y)];
    const T* r0 = src.ptr<T>(ty.i0);
    const T* r1 = src.ptr<T>(ty.i1);
    T* out = dst.ptr<T>(y);
    for (int x = 0; x < width; ++x) {
      const Tap& tx = xt[static_cast<std::size_t>(x)];
      for (int k = 0; k < ch; ++k) {
        const double top = r0[tx.i0 * ch + k] * (1 - tx.w1) + r0[tx.i1 * ch + k] * tx.w1;
        const double bot = r1[tx.i0 * ch + k] * (1 - tx.w1) + r1[tx.i1 * ch + k] * tx.w1;
        const double v = top * (1 - ty.w1) + bot * ty.w1;
        if constexpr (std::is_same_v<T, unsigned char>) {
          out[x * ch + k] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
        } else {
          out[x * ch + k] = static_cast<T>(v);
        }
      }
    }
  }
  return dst;
}

}  // namespace

PaddedImage pad_to_square(const cv::Mat& image) {
  if (image.empty()) throw InvalidArgument("pad_to_square: empty image");
  const int side = std::max(image.rows, image.cols);
  PadSpec pad;
  pad.top = (side - image.rows) / 2;
  pad.bottom = side - image.rows - pad.top;
  pad.left = (side - image.cols) / 2;
  pad.right = side - image.cols - pad.left;
  PaddedImage out;
  out.image = cv::Mat::zeros(side, side, image.type());
  image.copyTo(out.image(cv::Rect(pad.left, pad.top, image.cols, image.rows)));
  out.pad = pad;
  return out;
}

cv::Mat resize_square(const cv::Mat& image, int side) {
  if (image.rows != image.cols) {
    throw InvalidArgument("resize_square: input is " + std::to_string(image.cols) + "x" +
                          std::to_string(image.rows) + ", expected a square image");
  }
  if (side <= 0) throw InvalidArgument("resize_square: side must be positive");
  if (image.depth() != CV_8U) throw InvalidArgument("resize_square: expected an 8-bit image");
  if (image.rows == side) return image.clone();
  return resize_impl<unsigned char>(image, side, side, image.type());
}

cv::Mat resize_map(const cv::Mat& map, int width, int height) {
  if (map.channels() != 1) throw InvalidArgument("resize_map: expected a single-channel map");
  if (map.depth() == CV_32F) return resize_impl<float>(map, width, height, CV_32FC1);
  if (map.depth() == CV_64F) return resize_impl<double>(map, width, height, CV_64FC1);
  throw InvalidArgument("resize_map: expected CV_32F or CV_64F");
}

BoundingBox SquareView::to_view(const BoundingBox& s) const {
  return {(s.x_min + pad.left) * scale, (s.y_min + pad.top) * scale, (s.x_max + pad.left) * scale,
          (s.y_max + pad.top) * scale};
}

BoundingBox SquareView::to_source(const BoundingBox& v) const {
  return {v.x_min / scale - pad.left, v.y_min / scale - pad.top, v.x_max / scale - pad.left,
          v.y_max / scale - pad.top};
}

cv::Mat square_view(const cv::Mat& image, int side, SquareView* mapping) {
  PaddedImage padded = pad_to_square(image);
  if (mapping) {
    mapping->pad = padded.pad;
    mapping->scale = static_cast<double>(side) / padded.image.rows;
  }
  return resize_square(padded.image, side);
}

}  // namespace equicascade
