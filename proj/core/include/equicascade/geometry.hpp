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

#include <optional>
#include <string_view>
#include <vector>

namespace equicascade {

/// Axis-aligned box in pixel coordinates of some image.
struct BoundingBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_max > x_min && y_max > y_min; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Single-class detector target.
enum class RegionKind { kFace, kEye, kLowerFace };

std::string_view to_string(RegionKind kind);
/// Accepts "face", "eye", "lower_face".
std::optional<RegionKind> parse_region_kind(std::string_view name);

struct Detection {
  BoundingBox box;
  double confidence = 0;
  RegionKind kind = RegionKind::kFace;
};

/// Intersection over union; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Clamp to [0, width] x [0, height].
BoundingBox clip_box(const BoundingBox& box, double width, double height);

/// Intersection of two boxes, nullopt when they do not overlap.
std::optional<BoundingBox> intersect(const BoundingBox& a, const BoundingBox& b);

/// Greedy non-maximum suppression. A detection is dropped when its IoU with
/// an already kept, higher-confidence detection exceeds `iou_threshold`.
/// Equal confidences keep input order. Output is sorted by confidence.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

}  // namespace equicascade
