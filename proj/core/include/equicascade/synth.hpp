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
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/au_code.hpp"
#include "equicascade/dataset.hpp"
#include "equicascade/geometry.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::synth {

struct SynthSpec {
  int image_width = 256;
  int image_height = 256;
  /// Face width as a fraction of the frame width; face height is 1.25x the width.
  double face_min_fraction = 0.2;
  double face_max_fraction = 0.5;
  /// 0 draws glyphs in the surrounding color, 1 at full strength.
  double glyph_contrast = 1.0;
  /// Standard deviation of additive Gaussian pixel noise, in 8-bit units.
  double noise_sigma = 4.0;
  /// When false no AU glyph is drawn at all; labels then carry no signal.
  bool render_glyphs = true;
  int subject_count = data::kSubjectCount;
  std::string subject_prefix = "H";
  std::uint64_t style_seed = 0;
  /// Label used for negative frames. Must not be one of the corpus AUs.
  std::string negative_code = "AU10";
};

/// One generated still with its ground truth.
struct SynthFrame {
  std::string clip_id;
  std::string subject_id;
  AuCode label{"AU10"};
  cv::Mat image;
  BoundingBox face;
  BoundingBox eye;
  BoundingBox lower_face;
  /// Glyph box of every corpus AU, present or neutral.
  std::map<std::string, BoundingBox> features;
};

struct Corpus {
  std::vector<SynthFrame> frames;
  std::vector<data::ClipLabel> manifest;
};

/// For each AU: n_per_class frames showing the AU glyph (labelled with the
/// AU) and n_per_class frames with every glyph neutral (labelled with the
/// negative code). Within each block subjects are assigned round-robin.
/// Throws InvalidArgument when the face cannot fit the frame, when
/// n_per_class < 1, or when an AU is outside the in-scope set.
Corpus generate_corpus(const SynthSpec& spec, const std::vector<AuCode>& aus, int n_per_class, std::uint64_t seed);

/// Draws the glyph of `au` inside `region_box` (present or neutral) and
/// returns the glyph's box. Pixels outside the returned box are not touched.
/// Consumes the same number of draws from `rng` whether or not present.
BoundingBox render_au_feature(cv::Mat& canvas, const BoundingBox& region_box, const AuCode& au, bool present,
                              double contrast, Rng& rng);

/// Writes frames/<clip_id>.png, manifest.jsonl, boxes.jsonl (face, eye and
/// lower_face box per frame) and features.jsonl under `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Reads the three JSONL files and the frames back.
Corpus read_corpus(const std::filesystem::path& dir);

/// Subject ids in roster order ("H1", ..., "H8" for the default spec).
std::vector<std::string> subject_ids(const SynthSpec& spec);

}  // namespace equicascade::synth
