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

#include "equicascade/experiment.hpp"

#include <map>
#include <memory>
#include <mutex>

#include "equicascade/error.hpp"
#include "equicascade/parallel.hpp"

namespace equicascade::eval {
namespace fs = std::filesystem;

CropFn memoize(CropFn fn) {
  struct Cache {
    std::mutex mu;
    std::map<std::string, std::optional<cv::Mat>> items;
  };
  auto cache = std::make_shared<Cache>();
  return [fn = std::move(fn), cache](const data::FrameSample& s) -> std::optional<cv::Mat> {
    {
      std::lock_guard lock(cache->mu);
      auto it = cache->items.find(s.clip_id);
      if (it != cache->items.end()) return it->second;
    }
    auto value = fn(s);
    std::lock_guard lock(cache->mu);
    return cache->items.emplace(s.clip_id, std::move(value)).first->second;
  };
}

namespace {

bool needs_detectors(const ExperimentConfig& c) {
  for (auto l : c.levels) {
    if (l != cls::Level::kFrame) return true;
  }
  return false;
}

roi::DetectorSuite fold_detectors(const ExperimentConfig& config, const ExperimentData& data,
                                  const data::FoldSplit& fold, const fs::path& dir) {
  std::vector<roi::AnnotatedImage> images;
  for (const auto& a : data.detector_images) {
    if (fold.train_subjects.contains(a.subject_id)) images.push_back(a);
  }
  if (images.empty()) throw InvalidArgument("fold " + std::to_string(fold.fold_index) + ": no detector training images");
  roi::SuiteConfig sc = config.detectors;
  const std::string tag = "detectors/fold" + std::to_string(fold.fold_index);
  sc.face.seed = derive_seed(config.seed, tag + "/face");
  sc.eye.seed = derive_seed(config.seed, tag + "/eye");
  sc.lower_face.seed = derive_seed(config.seed, tag + "/lower_face");
  sc.train_eye = sc.train_lower_face = false;
  for (const auto& au : config.aus) {
    if (au.region() == FacialRegion::kEye) sc.train_eye = true;
    if (au.region() == FacialRegion::kLowerFace) sc.train_lower_face = true;
  }
  bool region_level = false;
  for (auto l : config.levels) region_level |= l == cls::Level::kRegion;
  if (!region_level) sc.train_eye = sc.train_lower_face = false;
  roi::DetectorSuite suite = roi::train_detector_suite(images, sc);
  fs::create_directories(dir);
  suite.face->save(dir / "face.eqck");
  if (suite.eye) suite.eye->save(dir / "eye.eqck");
  if (suite.lower_face) suite.lower_face->save(dir / "lower_face.eqck");
  return suite;
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& config, const ExperimentData& data, const fs::path& root,
                          const roi::DetectorSuite* shared_detectors, const Progress& progress) {
  if (config.aus.empty() || config.families.empty() || config.levels.empty()) {
    throw InvalidArgument("run_experiment: empty AU, family or level list");
  }
  const auto folds = data::make_subject_folds(data.subjects);
  std::vector<int> fold_ids = config.folds;
  if (fold_ids.empty()) {
    for (int i = 0; i < data::kSubjectCount; ++i) fold_ids.push_back(i);
  }
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  std::vector<FoldResult> results;
  for (int fi : fold_ids) {
    if (fi < 0 || fi >= data::kSubjectCount) throw InvalidArgument("run_experiment: fold index out of range");
    const data::FoldSplit& fold = folds[static_cast<std::size_t>(fi)];
    std::optional<roi::DetectorSuite> own;
    const roi::DetectorSuite* detectors = shared_detectors;
    if (!detectors && needs_detectors(config)) {
      say("fold " + std::to_string(fi) + ": training detectors");
      own = fold_detectors(config, data, fold, root / "detectors" / ("fold" + std::to_string(fi)));
      detectors = &*own;
    }

    struct Job {
      AuCode au;
      cls::Family family;
      cls::Level level;
    };
    std::vector<Job> jobs;
    std::map<std::pair<cls::Level, std::string>, CropFn> crop_fns;
    for (const auto& au : config.aus) {
      for (auto family : config.families) {
        for (auto level : config.levels) {
          jobs.push_back({au, family, level});
          std::string region_key = level == cls::Level::kRegion && au.region() ? std::string(to_string(*au.region())) : "";
          auto key = std::make_pair(level, region_key);
          if (!crop_fns.contains(key)) crop_fns[key] = memoize(make_crop_fn(level, au, detectors));
        }
      }
    }
    std::vector<FoldResult> fold_results(jobs.size());
    parallel_for(jobs.size(), config.workers, [&](std::size_t j) {
      const Job& job = jobs[j];
      FoldTask task;
      task.au = job.au;
      task.family = job.family;
      task.level = job.level;
      task.classifier = config.classifier;
      task.seed = config.seed;
      std::string region_key =
          job.level == cls::Level::kRegion && job.au.region() ? std::string(to_string(*job.au.region())) : "";
      const FoldArtifacts art =
          run_fold(fold, task, data.samples, crop_fns.at({job.level, region_key}), detectors);
      write_fold_artifacts(fold_directory(root, art.result), art);
      fold_results[j] = art.result;
    });
    for (const auto& r : fold_results) {
      say("fold " + std::to_string(fi) + " " + r.au + " " + r.family + " " + r.level + ": " + r.status);
      results.push_back(r);
    }
  }
  EvalReport report = build_report(results);
  write_report(root, report);
  return report;
}

}  // namespace equicascade::eval
