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
#include <functional>
#include <string>
#include <vector>

#include "equicascade/eval.hpp"

namespace equicascade::eval {

struct ExperimentConfig {
  std::vector<AuCode> aus;
  std::vector<cls::Family> families{cls::Family::kDrml, cls::Family::kAlexnet};
  std::vector<cls::Level> levels{cls::Level::kFrame, cls::Level::kFace, cls::Level::kRegion};
  /// Fold indices to run; empty means all eight.
  std::vector<int> folds;
  cls::ClassifierConfig classifier;
  roi::SuiteConfig detectors;
  std::uint64_t seed = 0;
  /// Concurrent (AU, family, level) jobs within a fold.
  int workers = 1;
};

struct ExperimentData {
  std::vector<data::FrameSample> samples;
  /// The eight subjects in fold order.
  std::vector<std::string> subjects;
  /// Frames with ground-truth boxes for detector training.
  std::vector<roi::AnnotatedImage> detector_images;
};

using Progress = std::function<void(const std::string&)>;

/// Runs every requested (fold, AU, family, level) job and writes
///   <root>/<au>/<family>/<level>/fold<i>/{checkpoint.eqck,curve.csv,metrics.json}
///   <root>/report.md, <root>/report.csv
/// Without `shared_detectors`, a detector suite is trained per fold on
/// that fold's training subjects only and stored under
/// <root>/detectors/fold<i>/. With it, the given suite is used for every
/// fold (run_fold still rejects it if it saw a held-out subject).
EvalReport run_experiment(const ExperimentConfig& config, const ExperimentData& data, const std::filesystem::path& root,
                          const roi::DetectorSuite* shared_detectors = nullptr, const Progress& progress = {});

/// Wraps a crop function so each clip is cropped once.
CropFn memoize(CropFn fn);

}  // namespace equicascade::eval
