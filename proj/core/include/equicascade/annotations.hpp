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

#include "equicascade/geometry.hpp"

namespace equicascade {

/// One ground-truth box from a box annotation file.
struct BoxAnnotation {
  std::string image;
  RegionKind kind = RegionKind::kFace;
  BoundingBox box;
  /// Optional; empty when the file does not carry it.
  std::string subject_id;
};

/// JSONL rows {"image","class","x_min","y_min","x_max","y_max"} plus an
/// optional "subject_id". Relative image paths resolve against the file's
/// directory. Throws ParseError naming the row and field.
std::vector<BoxAnnotation> load_box_annotations(const std::filesystem::path& path);

/// Image paths are written as given.
void write_box_annotations(const std::filesystem::path& path, const std::vector<BoxAnnotation>& rows);

}  // namespace equicascade
