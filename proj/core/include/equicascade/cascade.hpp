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
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/detector.hpp"
#include "equicascade/error.hpp"
#include "equicascade/image_ops.hpp"

namespace equicascade::roi {

inline constexpr int kFaceCropSide = 512;
inline constexpr int kRegionCropSide = 64;

/// Maps source-image coordinates into a crop taken at pixel origin
/// (x0, y0), zero-padded by `pad` and scaled by `scale`.
struct CropMapping {
  int x0 = 0;
  int y0 = 0;
  PadSpec pad;
  double scale = 1.0;

  BoundingBox to_crop(const BoundingBox& src) const;
  BoundingBox to_source(const BoundingBox& crop) const;
};

/// A normalised square crop of one region.
struct RegionCrop {
  cv::Mat image;
  /// Detected (or given) box in source-frame pixels.
  BoundingBox source_box;
  PadSpec pad_spec;
  RegionKind region_kind = RegionKind::kFace;
  CropMapping mapping;
  double confidence = 1.0;
};

/// Crops `box` (rounded outward to whole pixels and clipped to the frame),
/// zero-pads it to a square and resizes to side x side.
/// side <= 0 keeps the padded crop at its native size.
RegionCrop crop_region(const cv::Mat& frame, const BoundingBox& box, int side, RegionKind kind);

/// Raised when a cascade stage finds nothing.
class CascadeMiss : public Error {
 public:
  enum class Stage { kFace, kRegion };
  explicit CascadeMiss(Stage stage);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

/// Runs the face detector on the frame and keeps the highest-confidence
/// face. For kind == kFace returns the 512x512 face crop. Otherwise the
/// region detector runs on the (unresized) face crop, its best box is mapped
/// back to the frame, and the region is cropped from the frame at 64x64.
/// Throws CascadeMiss when a stage returns no detection.
RegionCrop cascade_detect(const DetectorModel& face_model, const DetectorModel* region_model, const cv::Mat& frame,
                          RegionKind kind);

/// Region-detector training example built from a frame, a face box and the
/// ground-truth region box: the face crop at native size and the region box
/// in face-crop coordinates.
DetectorSample region_training_sample(const cv::Mat& frame, const BoundingBox& face_box,
                                      const BoundingBox& region_box);

/// A frame with whatever ground-truth boxes are known for it.
struct AnnotatedImage {
  cv::Mat image;
  std::string subject_id;
  std::optional<BoundingBox> face;
  std::optional<BoundingBox> eye;
  std::optional<BoundingBox> lower_face;
};

struct DetectorSuite {
  std::optional<DetectorModel> face;
  std::optional<DetectorModel> eye;
  std::optional<DetectorModel> lower_face;

  const DetectorModel* region(RegionKind kind) const;
  /// Union of the subjects that trained any detector.
  std::set<std::string> training_subjects() const;
};

struct SuiteConfig {
  DetectorConfig face;
  DetectorConfig eye;
  DetectorConfig lower_face;
  bool train_eye = true;
  bool train_lower_face = true;
};

/// Trains the face detector on the images, then the eye and lower-face
/// detectors on face crops produced by that detector. A training image
/// whose detected face overlaps the ground truth by less than 0.5 IoU
/// falls back to its ground-truth face crop; region boxes cut by the crop
/// to under half their area are dropped.
DetectorSuite train_detector_suite(const std::vector<AnnotatedImage>& images, const SuiteConfig& config);

/// Mean IoU of the best region detection against the ground-truth region,
/// measured in face-crop coordinates of the detected face (0 for any miss).
double cascade_region_iou(const DetectorModel& face_model, const DetectorModel& region_model,
                          const std::vector<AnnotatedImage>& images, RegionKind kind);

}  // namespace equicascade::roi
