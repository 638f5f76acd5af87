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

#include "equicascade/cascade.hpp"

#include <algorithm>
#include <cmath>

namespace equicascade::roi {

BoundingBox CropMapping::to_crop(const BoundingBox& s) const {
  const double ox = pad.left - x0;
  const double oy = pad.top - y0;
  return {(s.x_min + ox) * scale, (s.y_min + oy) * scale, (s.x_max + ox) * scale, (s.y_max + oy) * scale};
}

BoundingBox CropMapping::to_source(const BoundingBox& c) const {
  const double ox = pad.left - x0;
  const double oy = pad.top - y0;
  return {c.x_min / scale - ox, c.y_min / scale - oy, c.x_max / scale - ox, c.y_max / scale - oy};
}

RegionCrop crop_region(const cv::Mat& frame, const BoundingBox& box, int side, RegionKind kind) {
  if (frame.empty()) throw InvalidArgument("crop_region: empty frame");
  const BoundingBox clipped = clip_box(box, frame.cols, frame.rows);
  const int x0 = std::clamp(static_cast<int>(std::floor(clipped.x_min)), 0, frame.cols - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(clipped.y_min)), 0, frame.rows - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(clipped.x_max)), x0 + 1, frame.cols);
  const int y1 = std::clamp(static_cast<int>(std::ceil(clipped.y_max)), y0 + 1, frame.rows);
  const PaddedImage padded = pad_to_square(frame(cv::Rect(x0, y0, x1 - x0, y1 - y0)));

  RegionCrop crop;
  crop.source_box = clipped;
  crop.pad_spec = padded.pad;
  crop.region_kind = kind;
  crop.mapping.x0 = x0;
  crop.mapping.y0 = y0;
  crop.mapping.pad = padded.pad;
  if (side > 0) {
    crop.image = resize_square(padded.image, side);
    crop.mapping.scale = static_cast<double>(side) / padded.image.cols;
  } else {
    crop.image = padded.image;
  }
  return crop;
}

CascadeMiss::CascadeMiss(Stage stage)
    : Error(stage == Stage::kFace ? "cascade miss: no face detected" : "cascade miss: no region detected"),
      stage_(stage) {}

RegionCrop cascade_detect(const DetectorModel& face_model, const DetectorModel* region_model, const cv::Mat& frame,
                          RegionKind kind) {
  if (face_model.config().kind != RegionKind::kFace) throw InvalidArgument("cascade_detect: not a face detector");
  if (kind != RegionKind::kFace && (region_model == nullptr || region_model->config().kind != kind)) {
    throw InvalidArgument("cascade_detect: region detector does not match the requested region");
  }
  const auto faces = detect(face_model, frame);
  if (faces.empty()) throw CascadeMiss(CascadeMiss::Stage::kFace);
  const Detection& face = faces.front();
  if (kind == RegionKind::kFace) {
    RegionCrop crop = crop_region(frame, face.box, kFaceCropSide, RegionKind::kFace);
    crop.confidence = face.confidence;
    return crop;
  }
  const RegionCrop face_crop = crop_region(frame, face.box, 0, RegionKind::kFace);
  const auto regions = detect(*region_model, face_crop.image);
  if (regions.empty()) throw CascadeMiss(CascadeMiss::Stage::kRegion);
  const BoundingBox in_frame = face_crop.mapping.to_source(regions.front().box);
  RegionCrop crop = crop_region(frame, in_frame, kRegionCropSide, kind);
  crop.confidence = regions.front().confidence;
  return crop;
}

DetectorSample region_training_sample(const cv::Mat& frame, const BoundingBox& face_box,
                                      const BoundingBox& region_box) {
  const RegionCrop face_crop = crop_region(frame, face_box, 0, RegionKind::kFace);
  const BoundingBox box = clip_box(face_crop.mapping.to_crop(region_box), face_crop.image.cols, face_crop.image.rows);
  return {face_crop.image, box};
}


const DetectorModel* DetectorSuite::region(RegionKind kind) const {
  const auto& m = kind == RegionKind::kEye ? eye : kind == RegionKind::kLowerFace ? lower_face : face;
  return m ? &*m : nullptr;
}

std::set<std::string> DetectorSuite::training_subjects() const {
  std::set<std::string> out;
  for (const auto* m : {&face, &eye, &lower_face}) {
    if (*m) out.insert((*m)->training_subjects().begin(), (*m)->training_subjects().end());
  }
  return out;
}

namespace {

const std::optional<BoundingBox>& region_truth(const AnnotatedImage& a, RegionKind kind) {
  return kind == RegionKind::kEye ? a.eye : a.lower_face;
}

BoundingBox face_for_training(const DetectorModel& face_model, const AnnotatedImage& a) {
  const auto dets = detect(face_model, a.image);
  if (!dets.empty() && iou(dets.front().box, *a.face) >= 0.5) return dets.front().box;
  return *a.face;
}

}  // namespace

DetectorSuite train_detector_suite(const std::vector<AnnotatedImage>& images, const SuiteConfig& config) {
  std::set<std::string> subjects;
  std::vector<DetectorSample> faces;
  for (const auto& a : images) {
    if (!a.face) continue;
    faces.push_back({a.image, *a.face});
    subjects.insert(a.subject_id);
  }
  DetectorSuite suite;
  DetectorConfig face_cfg = config.face;
  face_cfg.kind = RegionKind::kFace;
  suite.face = train_detector(faces, face_cfg);
  suite.face->set_training_subjects(subjects);

  std::vector<BoundingBox> crop_faces(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].face) crop_faces[i] = face_for_training(*suite.face, images[i]);
  }
  auto train_region = [&](RegionKind kind, DetectorConfig cfg) {
    cfg.kind = kind;
    std::vector<DetectorSample> samples;
    std::set<std::string> used;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& truth = region_truth(images[i], kind);
      if (!images[i].face || !truth) continue;
      DetectorSample s = region_training_sample(images[i].image, crop_faces[i], *truth);
      const RegionCrop crop = crop_region(images[i].image, crop_faces[i], 0, kind);
      const double kept = s.box.valid() ? s.box.area() / crop.mapping.to_crop(*truth).area() : 0.0;
      if (kept < 0.5) continue;
      samples.push_back(std::move(s));
      used.insert(images[i].subject_id);
    }
    DetectorModel m = train_detector(samples, cfg);
    m.set_training_subjects(used);
    return m;
  };
  if (config.train_eye) suite.eye = train_region(RegionKind::kEye, config.eye);
  if (config.train_lower_face) suite.lower_face = train_region(RegionKind::kLowerFace, config.lower_face);
  return suite;
}

double cascade_region_iou(const DetectorModel& face_model, const DetectorModel& region_model,
                          const std::vector<AnnotatedImage>& images, RegionKind kind) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& a : images) {
    const auto& truth = region_truth(a, kind);
    if (!truth) continue;
    ++n;
    const auto faces = detect(face_model, a.image);
    if (faces.empty()) continue;
    const RegionCrop crop = crop_region(a.image, faces.front().box, 0, RegionKind::kFace);
    const auto regions = detect(region_model, crop.image);
    if (regions.empty()) continue;
    total += iou(regions.front().box, crop.mapping.to_crop(*truth));
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace equicascade::roi
