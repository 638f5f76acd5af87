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

#include "equicascade/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "equicascade/error.hpp"
#include "equicascade/image_ops.hpp"

namespace equicascade::eval {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const FoldResult*> ReportRow::excluded() const {
  std::vector<const FoldResult*> out;
  for (const auto& f : folds) {
    if (!f.valid()) out.push_back(&f);
  }
  return out;
}

ReportRow aggregate(const std::vector<FoldResult>& results) {
  if (results.empty()) throw InvalidArgument("aggregate: no fold results");
  ReportRow row;
  row.au = results.front().au;
  row.family = results.front().family;
  row.level = results.front().level;
  std::set<int> seen;
  std::vector<double> acc, f1;
  for (const auto& r : results) {
    if (r.au != row.au || r.family != row.family || r.level != row.level) {
      throw InvalidArgument("aggregate: results mix configurations");
    }
    if (!seen.insert(r.fold_index).second) {
      throw InvalidArgument("aggregate: fold " + std::to_string(r.fold_index) + " appears twice");
    }
    if (r.valid()) {
      acc.push_back(r.accuracy);
      f1.push_back(r.f1);
    }
  }
  if (acc.empty()) throw InvalidArgument("aggregate: no valid fold for " + row.au + " " + row.family + " " + row.level);
  row.folds = results;
  std::sort(row.folds.begin(), row.folds.end(),
            [](const FoldResult& a, const FoldResult& b) { return a.fold_index < b.fold_index; });
  row.acc_mean = mean(acc);
  row.acc_std = sample_std(acc);
  row.f1_mean = mean(f1);
  row.f1_std = sample_std(f1);
  row.folds_used = static_cast<int>(acc.size());
  return row;
}

namespace {

int au_rank(const std::string& au) {
  auto code = AuCode::parse(au);
  return code ? report_rank(*code) : 1000;
}

int family_rank(const std::string& f) { return f == "drml" ? 0 : f == "alexnet" ? 1 : 2; }

int level_rank(const std::string& l) { return l == "frame" ? 0 : l == "face" ? 1 : l == "region" ? 2 : 3; }

auto row_key(const std::string& au, const std::string& family, const std::string& level) {
  return std::make_tuple(au_rank(au), au, family_rank(family), family, level_rank(level), level);
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

EvalReport build_report(const std::vector<FoldResult>& results) {
  std::map<decltype(row_key("", "", "")), std::vector<FoldResult>> groups;
  for (const auto& r : results) groups[row_key(r.au, r.family, r.level)].push_back(r);
  EvalReport report;
  for (const auto& [key, group] : groups) {
    bool any_valid = std::any_of(group.begin(), group.end(), [](const FoldResult& r) { return r.valid(); });
    if (any_valid) {
      report.rows.push_back(aggregate(group));
    } else {
      ReportRow row;
      row.au = group.front().au;
      row.family = group.front().family;
      row.level = group.front().level;
      row.folds = group;
      std::sort(row.folds.begin(), row.folds.end(),
                [](const FoldResult& a, const FoldResult& b) { return a.fold_index < b.fold_index; });
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string format_cell(double mean_value, double std_value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f±%.1f", 100.0 * mean_value, 100.0 * std_value);
  return buf;
}

std::string render_markdown(const EvalReport& report) {
  std::ostringstream md;
  md << "# Evaluation report\n\n";
  md << "Cells are mean±std in percent over the valid folds of subject-exclusive cross-validation. "
        "std is the sample standard deviation (n-1).\n\n";
  md << "| AU | Family | Level | Accuracy | F1 | Folds |\n";
  md << "|---|---|---|---|---|---|\n";
  std::vector<std::string> notes;
  for (const auto& row : report.rows) {
    const std::string folds = std::to_string(row.folds_used) + "/" + std::to_string(row.folds.size());
    if (row.folds_used > 0) {
      md << "| " << row.au << " | " << row.family << " | " << row.level << " | "
         << format_cell(row.acc_mean, row.acc_std) << " | " << format_cell(row.f1_mean, row.f1_std) << " | " << folds
         << " |\n";
    } else {
      md << "| " << row.au << " | " << row.family << " | " << row.level << " | n/a | n/a | " << folds << " |\n";
    }
    for (const auto* f : row.excluded()) {
      notes.push_back(row.au + " " + row.family + " " + row.level + " fold " + std::to_string(f->fold_index) + ": " +
                      f->status);
    }
  }
  if (!notes.empty()) {
    md << "\nExcluded folds:\n\n";
    for (const auto& n : notes) md << "- " << n << "\n";
  }
  return md.str();
}

namespace {
constexpr const char* kCsvHeader =
    "row_type,au,family,level,fold,accuracy,f1,n_test,status,cascade_misses,acc_mean,acc_std,f1_mean,f1_std,"
    "folds_used";
}

std::string render_csv(const EvalReport& report) {
  std::ostringstream csv;
  csv << kCsvHeader << "\n";
  for (const auto& row : report.rows) {
    csv << "aggregate," << row.au << ',' << row.family << ',' << row.level << ",,,,,,," << g17(row.acc_mean) << ','
        << g17(row.acc_std) << ',' << g17(row.f1_mean) << ',' << g17(row.f1_std) << ',' << row.folds_used << "\n";
    for (const auto& f : row.folds) {
      csv << "fold," << f.au << ',' << f.family << ',' << f.level << ',' << f.fold_index << ',' << g17(f.accuracy)
          << ',' << g17(f.f1) << ',' << f.n_test << ',' << csv_safe(f.status) << ',' << f.cascade_misses
          << ",,,,,\n";
    }
  }
  return csv.str();
}

EvalReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != split(kCsvHeader, ',')) {
    throw ParseError("report CSV: unexpected header");
  }
  EvalReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 15) throw ParseError("report CSV line " + std::to_string(lineno) + ": expected 15 fields");
    try {
      if (cells[0] == "aggregate") {
        ReportRow row;
        row.au = cells[1];
        row.family = cells[2];
        row.level = cells[3];
        row.acc_mean = std::stod(cells[10]);
        row.acc_std = std::stod(cells[11]);
        row.f1_mean = std::stod(cells[12]);
        row.f1_std = std::stod(cells[13]);
        row.folds_used = std::stoi(cells[14]);
        report.rows.push_back(std::move(row));
      } else if (cells[0] == "fold") {
        if (report.rows.empty()) throw ParseError("report CSV: fold row before any aggregate row");
        ReportRow& row = report.rows.back();
        FoldResult f;
        f.au = cells[1];
        f.family = cells[2];
        f.level = cells[3];
        if (f.au != row.au || f.family != row.family || f.level != row.level) {
          throw ParseError("report CSV line " + std::to_string(lineno) + ": fold row does not match its aggregate");
        }
        f.fold_index = std::stoi(cells[4]);
        f.accuracy = std::stod(cells[5]);
        f.f1 = std::stod(cells[6]);
        f.n_test = std::stoi(cells[7]);
        f.status = cells[8];
        f.cascade_misses = std::stoi(cells[9]);
        row.folds.push_back(std::move(f));
      } else {
        throw ParseError("report CSV line " + std::to_string(lineno) + ": unknown row type '" + cells[0] + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError("report CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return report;
}

void write_report(const fs::path& dir, const EvalReport& report) {
  if (report.rows.empty()) throw InvalidArgument("write_report: empty report");
  fs::create_directories(dir);
  std::ofstream md(dir / "report.md", std::ios::binary | std::ios::trunc);
  std::ofstream csv(dir / "report.csv", std::ios::binary | std::ios::trunc);
  if (!md || !csv) throw Error("cannot write report files in '" + dir.string() + "'");
  md << render_markdown(report);
  csv << render_csv(report);
}

std::string fold_result_json(const FoldResult& r) {
  json j = {{"fold", r.fold_index},   {"au", r.au},         {"family", r.family},
            {"level", r.level},       {"accuracy", r.accuracy}, {"f1", r.f1},
            {"n_test", r.n_test},     {"status", r.status}, {"cascade_misses", r.cascade_misses}};
  return j.dump(2) + "\n";
}

FoldResult parse_fold_result_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FoldResult r;
    r.fold_index = j.at("fold").get<int>();
    r.au = j.at("au").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.level = j.at("level").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.n_test = j.at("n_test").get<int>();
    r.status = j.at("status").get<std::string>();
    r.cascade_misses = j.value("cascade_misses", 0);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics JSON: ") + e.what());
  }
}

// ------------------------------------------------------------------ folds

CropFn make_crop_fn(cls::Level level, const AuCode& au, const roi::DetectorSuite* detectors) {
  if (level == cls::Level::kFrame) {
    return [](const data::FrameSample& s) -> std::optional<cv::Mat> {
      return resize_square(pad_to_square(s.image).image, cls::crop_side(cls::Level::kFrame));
    };
  }
  if (!detectors || !detectors->face) throw InvalidArgument("make_crop_fn: face detector required");
  const roi::DetectorModel* face = &*detectors->face;
  if (level == cls::Level::kFace) {
    return [face](const data::FrameSample& s) -> std::optional<cv::Mat> {
      try {
        return roi::cascade_detect(*face, nullptr, s.image, RegionKind::kFace).image;
      } catch (const roi::CascadeMiss&) {
        return std::nullopt;
      }
    };
  }
  const auto region = au.region();
  if (!region) throw InvalidArgument("make_crop_fn: " + au.str() + " has no facial region");
  const RegionKind kind = *region == FacialRegion::kEye ? RegionKind::kEye : RegionKind::kLowerFace;
  const roi::DetectorModel* region_model = detectors->region(kind);
  if (!region_model) throw InvalidArgument("make_crop_fn: no " + std::string(to_string(kind)) + " detector");
  return [face, region_model, kind](const data::FrameSample& s) -> std::optional<cv::Mat> {
    try {
      return roi::cascade_detect(*face, region_model, s.image, kind).image;
    } catch (const roi::CascadeMiss&) {
      return std::nullopt;
    }
  };
}

namespace {

struct SplitCrops {
  std::vector<cls::LabeledImage> items;
  std::size_t misses = 0;
  std::size_t requested = 0;
};

SplitCrops crop_split(const data::BalancedSet& set, const CropFn& crop, const cls::BinaryClassifier& clf) {
  SplitCrops out;
  std::vector<cls::LabeledImage> pos, neg;
  auto run = [&](const std::vector<data::FrameSample>& src, bool positive, std::vector<cls::LabeledImage>& dst) {
    for (const auto& s : src) {
      ++out.requested;
      auto img = crop(s);
      if (!img) {
        ++out.misses;
        continue;
      }
      dst.push_back({clf.to_network_input(*img), positive, s.subject_id, s.clip_id});
    }
  };
  run(set.positives, true, pos);
  run(set.negatives, false, neg);
  const std::size_t n = std::min(pos.size(), neg.size());
  pos.resize(n);
  neg.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.items.push_back(std::move(pos[i]));
    out.items.push_back(std::move(neg[i]));
  }
  return out;
}

}  // namespace

FoldArtifacts run_fold(const data::FoldSplit& fold, const FoldTask& task, const std::vector<data::FrameSample>& samples,
                       const CropFn& crop, const roi::DetectorSuite* detectors) {
  FoldArtifacts art;
  FoldResult& r = art.result;
  r.fold_index = fold.fold_index;
  r.au = task.au.str();
  r.family = std::string(cls::to_string(task.family));
  r.level = std::string(cls::to_string(task.level));

  if (detectors) {
    for (const auto& s : detectors->training_subjects()) {
      if (s == fold.test_subject || s == fold.val_subject) {
        throw LeakageError("fold " + std::to_string(fold.fold_index) + ": detector trained on held-out subject " + s);
      }
    }
  }
  if (fold.train_subjects.contains(fold.test_subject) || fold.train_subjects.contains(fold.val_subject) ||
      fold.val_subject == fold.test_subject) {
    throw LeakageError("fold " + std::to_string(fold.fold_index) + ": subject groups overlap");
  }

  cls::ClassifierConfig cc = task.classifier;
  cc.family = task.family;
  cc.level = task.level;
  cc.input_side = cls::crop_side(task.level);
  const std::string tag = r.au + "/" + r.family + "/" + r.level + "/fold" + std::to_string(fold.fold_index);
  cc.seed = derive_seed(task.seed, "classifier/" + tag);
  cls::BinaryClassifier clf(cc);

  const std::uint64_t balance_seed = derive_seed(task.seed, "balance/" + r.au + "/fold" + std::to_string(fold.fold_index));
  std::map<data::Split, SplitCrops> crops;
  for (auto split : {data::Split::kTest, data::Split::kTrain, data::Split::kVal}) {
    data::BalancedSet set;
    try {
      set = data::build_binary_dataset(samples, task.au, fold.subjects(split), balance_seed, split);
    } catch (const InvalidArgument& e) {
      const std::string what = e.what();
      r.status = what.rfind("no positives", 0) == 0
                     ? "skipped: no positives in " + std::string(data::to_string(split))
                     : "skipped: too few negatives in " + std::string(data::to_string(split));
      return art;
    }
    SplitCrops sc = crop_split(set, crop, clf);
    r.cascade_misses += static_cast<int>(sc.misses);
    if (2 * sc.misses > sc.requested || sc.items.empty()) {
      r.status = "invalid: more than half of the " + std::string(data::to_string(split)) + " split lost to cascade misses";
      return art;
    }
    crops[split] = std::move(sc);
  }

  for (auto split : {data::Split::kTrain, data::Split::kVal}) {
    for (const auto& item : crops[split].items) {
      if (item.subject_id == fold.test_subject) {
        throw LeakageError("fold " + std::to_string(fold.fold_index) + ": test subject sample '" + item.sample_id +
                           "' in " + std::string(data::to_string(split)) + " split");
      }
    }
  }
  for (const auto& item : crops[data::Split::kTrain].items) {
    if (item.subject_id == fold.val_subject) {
      throw LeakageError("fold " + std::to_string(fold.fold_index) + ": validation subject sample '" +
                         item.sample_id + "' in train split");
    }
  }

  clf.set_training_subjects(fold.train_subjects);
  art.curve = cls::train_binary(clf, crops[data::Split::kTrain].items, crops[data::Split::kVal].items, task.workers);

  art.test = std::move(crops[data::Split::kTest].items);
  std::vector<cv::Mat> images;
  std::vector<bool> labels;
  for (const auto& t : art.test) {
    images.push_back(t.image);
    labels.push_back(t.positive);
  }
  const auto probs = clf.probabilities(images, task.workers);
  std::vector<bool> decisions;
  for (double p : probs) decisions.push_back(p >= clf.threshold());
  const auto m = binary_metrics(decisions, labels);
  r.accuracy = m.accuracy;
  r.f1 = m.f1;
  r.n_test = static_cast<int>(art.test.size());
  art.classifier.emplace(std::move(clf));
  return art;
}

fs::path fold_directory(const fs::path& root, const FoldResult& r) {
  return root / r.au / r.family / r.level / ("fold" + std::to_string(r.fold_index));
}

void write_fold_artifacts(const fs::path& dir, const FoldArtifacts& art) {
  fs::create_directories(dir);
  if (art.classifier) art.classifier->save(dir / "checkpoint.eqck");
  if (!art.curve.points.empty()) art.curve.write_csv(dir / "curve.csv");
  std::ofstream out(dir / "metrics.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + (dir / "metrics.json").string() + "'");
  out << fold_result_json(art.result);
}

std::vector<FoldResult> collect_fold_results(const fs::path& root) {
  std::vector<fs::path> files;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<FoldResult> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    out.push_back(parse_fold_result_json(ss.str()));
  }
  return out;
}

}  // namespace equicascade::eval
