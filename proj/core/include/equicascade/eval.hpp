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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "equicascade/cascade.hpp"
#include "equicascade/classifier.hpp"
#include "equicascade/dataset.hpp"
#include "equicascade/metrics.hpp"

namespace equicascade::eval {

/// Outcome of one (fold, AU, family, level) run.
struct FoldResult {
  int fold_index = 0;
  std::string au;
  std::string family;
  std::string level;
  double accuracy = 0;
  double f1 = 0;
  int n_test = 0;
  /// "ok", "skipped: ..." or "invalid: ...".
  std::string status = "ok";
  int cascade_misses = 0;

  bool valid() const { return status == "ok"; }
  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

struct ReportRow {
  std::string au;
  std::string family;
  std::string level;
  double acc_mean = 0;
  double acc_std = 0;
  double f1_mean = 0;
  double f1_std = 0;
  int folds_used = 0;
  std::vector<FoldResult> folds;

  /// Folds excluded from the aggregate.
  std::vector<const FoldResult*> excluded() const;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Mean and sample standard deviation over the valid folds of one
/// configuration; invalid folds are kept in the row but not averaged.
/// Throws InvalidArgument when the results are empty, mix configurations,
/// repeat a fold, or contain no valid fold.
ReportRow aggregate(const std::vector<FoldResult>& results);

/// Groups results by (au, family, level) and sorts rows by report rank of
/// the AU, then family (drml first), then level (frame, face, region).
EvalReport build_report(const std::vector<FoldResult>& results);

/// "58.1±4.8": percentages with one decimal.
std::string format_cell(double mean, double std);

std::string render_markdown(const EvalReport& report);
/// Lossless: doubles are written with 17 significant digits.
std::string render_csv(const EvalReport& report);
EvalReport parse_report_csv(const std::string& text);

/// Writes report.md and report.csv into `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

std::string fold_result_json(const FoldResult& r);
FoldResult parse_fold_result_json(const std::string& text);

/// Everything run_fold needs besides the fold itself.
struct FoldTask {
  AuCode au{"AU101"};
  cls::Family family = cls::Family::kDrml;
  cls::Level level = cls::Level::kRegion;
  /// Template for the classifier; family, level, input side and seed are
  /// filled in per task.
  cls::ClassifierConfig classifier;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Crop source for one frame. Returns nullopt on a cascade miss.
using CropFn = std::function<std::optional<cv::Mat>(const data::FrameSample&)>;

/// Crop function for a level: frames are padded and resized to 176, faces
/// and regions go through the detector cascade. The AU decides whether the
/// eye or the lower-face detector is used.
CropFn make_crop_fn(cls::Level level, const AuCode& au, const roi::DetectorSuite* detectors);

struct FoldArtifacts {
  FoldResult result;
  std::optional<cls::BinaryClassifier> classifier;
  cls::TrainingCurve curve;
  /// Test crops with labels, kept for saliency.
  std::vector<cls::LabeledImage> test;
};

/// Builds the balanced train/val/test sets from the fold's subjects, crops
/// them, trains on train, selects on val and scores on test.
///
/// Leakage guards: throws LeakageError when a detector was trained on the
/// fold's validation or test subject, or when any train/val sample belongs
/// to the test subject. A test subject without positives yields status
/// "skipped: no positives"; losing more than half of any split to cascade
/// misses yields "invalid: ...". After misses the larger side of a split is
/// trimmed so the set stays balanced.
FoldArtifacts run_fold(const data::FoldSplit& fold, const FoldTask& task, const std::vector<data::FrameSample>& samples,
                       const CropFn& crop, const roi::DetectorSuite* detectors);

/// Writes checkpoint.eqck, curve.csv and metrics.json into `dir`.
void write_fold_artifacts(const std::filesystem::path& dir, const FoldArtifacts& artifacts);

/// results/<au>/<family>/<level>/fold<i>
std::filesystem::path fold_directory(const std::filesystem::path& root, const FoldResult& r);

/// Reads every metrics.json below `root`.
std::vector<FoldResult> collect_fold_results(const std::filesystem::path& root);

}  // namespace equicascade::eval
