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

#include "equicascade/dataset.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>
#include <sstream>
#include <unordered_set>

#include "equicascade/error.hpp"
#include "equicascade/parallel.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::data {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

const std::set<std::string> FoldSplit::subjects(Split split) const {
  switch (split) {
    case Split::kTrain: return train_subjects;
    case Split::kVal: return {val_subject};
    case Split::kTest: return {test_subject};
  }
  return {};
}

// ----------------------------------------------------------------- manifest

namespace {

constexpr std::array<const char*, 6> kManifestFields = {"clip_id", "subject_id", "au", "t_start", "t_end",
                                                        "video_uri"};

std::string resolve_uri(const std::string& uri, const fs::path& base_dir) {
  if (uri.empty()) return uri;
  const fs::path p(uri);
  if (p.is_absolute() || base_dir.empty()) return uri;
  return (base_dir / p).lexically_normal().string();
}

// Raw string fields for one row, keyed by column name.
using RawRow = std::map<std::string, std::string>;

ClipLabel make_clip(const RawRow& row, std::size_t line, const fs::path& base_dir, std::vector<std::string>* warnings) {
  auto field = [&](const char* name) -> const std::string& {
    auto it = row.find(name);
    if (it == row.end() || it->second.empty()) {
      throw ParseError("manifest row " + std::to_string(line) + ": missing field '" + name + "'");
    }
    return it->second;
  };
  auto number = [&](const char* name) {
    const std::string& s = field(name);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::logic_error&) {
      throw ParseError("manifest row " + std::to_string(line) + ": field '" + name + "' is not a number");
    }
  };
  ClipLabel clip;
  clip.clip_id = field("clip_id");
  clip.subject_id = field("subject_id");
  auto au = AuCode::parse(field("au"));
  if (!au) {
    throw ParseError("manifest row " + std::to_string(line) + ": unknown AU code '" + field("au") + "'");
  }
  clip.au = *au;
  clip.t_start = number("t_start");
  clip.t_end = number("t_end");
  clip.video_uri = resolve_uri(field("video_uri"), base_dir);
  if (!(clip.t_end > clip.t_start)) {
    throw ParseError("manifest row " + std::to_string(line) + ": t_end must exceed t_start");
  }
  const double d = clip.duration();
  if (warnings && (d < kMinClipSeconds - 1e-9 || d > kMaxClipSeconds + 1e-9)) {
    warnings->push_back("manifest row " + std::to_string(line) + ": clip '" + clip.clip_id + "' duration " +
                        std::to_string(d) + " s outside [0.05, 120]");
  }
  return clip;
}

void validate(const std::vector<ClipLabel>& clips) {
  std::unordered_set<std::string> ids;
  std::set<std::string> subjects;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (!ids.insert(clips[i].clip_id).second) {
      throw ParseError("manifest row " + std::to_string(i + 1) + ": duplicate clip_id '" + clips[i].clip_id + "'");
    }
    subjects.insert(clips[i].subject_id);
  }
  if (subjects.size() > static_cast<std::size_t>(kSubjectCount)) {
    throw ParseError("manifest names " + std::to_string(subjects.size()) + " subjects; at most " +
                     std::to_string(kSubjectCount) + " are allowed");
  }
}

std::string json_field_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  if (v.is_null()) return {};
  return v.dump();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<ClipLabel> parse_manifest_jsonl(std::istream& in, const fs::path& base_dir,
                                            std::vector<std::string>* warnings) {
  std::vector<ClipLabel> clips;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("manifest row " + std::to_string(row) + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ParseError("manifest row " + std::to_string(row) + ": expected an object");
    RawRow raw;
    for (const char* f : kManifestFields) {
      if (obj.contains(f)) raw[f] = json_field_string(obj[f]);
    }
    clips.push_back(make_clip(raw, row, base_dir, warnings));
  }
  validate(clips);
  return clips;
}

std::vector<ClipLabel> parse_manifest_csv(std::istream& in, const fs::path& base_dir,
                                          std::vector<std::string>* warnings) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv_line(line);
  std::vector<ClipLabel> clips;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto cells = split_csv_line(line);
    RawRow raw;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) raw[header[i]] = cells[i];
    clips.push_back(make_clip(raw, row, base_dir, warnings));
  }
  validate(clips);
  return clips;
}

std::vector<ClipLabel> load_manifest(const fs::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();
  if (path.extension() == ".csv") return parse_manifest_csv(in, base, warnings);
  return parse_manifest_jsonl(in, base, warnings);
}

void write_manifest(const fs::path& path, const std::vector<ClipLabel>& clips) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();
  for (const auto& c : clips) {
    std::string uri = c.video_uri;
    if (fs::path(uri).is_absolute() && !base.empty()) {
      const auto rel = fs::path(uri).lexically_relative(fs::absolute(base));
      if (!rel.empty() && *rel.begin() != "..") uri = rel.string();
    } else if (!base.empty()) {
      const auto rel = fs::path(uri).lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") uri = rel.string();
    }
    json obj = {{"clip_id", c.clip_id}, {"subject_id", c.subject_id}, {"au", c.au.str()},
                {"t_start", c.t_start}, {"t_end", c.t_end},           {"video_uri", uri}};
    out << obj.dump() << '\n';
  }
}

std::map<std::string, int> class_counts(const std::vector<ClipLabel>& manifest) {
  std::map<std::string, int> counts;
  for (auto code : au_roster()) counts[std::string(code)] = 0;
  for (const auto& c : manifest) ++counts[c.au.str()];
  return counts;
}

std::vector<AuCode> select_classes(const std::map<std::string, int>& counts, int min_count,
                                   const std::vector<AuCode>& exclude) {
  if (min_count <= 0) throw InvalidArgument("select_classes: min_count must be positive");
  std::vector<AuCode> out;
  for (const auto& [code, n] : counts) {
    if (n <= min_count) continue;
    auto au = AuCode::parse(code);
    if (!au) continue;
    if (std::find(exclude.begin(), exclude.end(), *au) != exclude.end()) continue;
    out.push_back(*au);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> subjects_in(const std::vector<ClipLabel>& manifest) {
  std::vector<std::string> out;
  for (const auto& c : manifest) {
    if (std::find(out.begin(), out.end(), c.subject_id) == out.end()) out.push_back(c.subject_id);
  }
  return out;
}

// ----------------------------------------------------------- frame sampling

namespace {

bool is_still_image(const std::string& uri) {
  std::string ext = fs::path(uri).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

VideoInfo OpenCvVideoReader::probe(const std::string& uri) const {
  if (is_still_image(uri)) {
    if (!fs::exists(uri)) throw Error("image not found: " + uri);
    return {1, 0.0, true};
  }
  cv::VideoCapture cap(uri);
  if (!cap.isOpened()) throw Error("cannot open video: " + uri);
  VideoInfo info;
  info.frame_count = static_cast<std::int64_t>(cap.get(cv::CAP_PROP_FRAME_COUNT));
  info.fps = cap.get(cv::CAP_PROP_FPS);
  if (info.frame_count <= 0 || !(info.fps > 0)) throw Error("video has no frame timing: " + uri);
  return info;
}

cv::Mat OpenCvVideoReader::read(const std::string& uri, std::int64_t frame_index) const {
  cv::Mat frame;
  if (is_still_image(uri)) {
    frame = cv::imread(uri, cv::IMREAD_COLOR);
  } else {
    cv::VideoCapture cap(uri);
    if (cap.isOpened()) {
      cap.set(cv::CAP_PROP_POS_FRAMES, static_cast<double>(frame_index));
      cap.read(frame);
    }
  }
  if (frame.empty()) throw Error("cannot decode frame " + std::to_string(frame_index) + " of " + uri);
  return frame;
}

std::pair<std::int64_t, std::int64_t> clip_frame_range(const ClipLabel& clip, const VideoInfo& info) {
  if (info.still) return {0, 0};
  auto first = static_cast<std::int64_t>(std::floor(clip.t_start * info.fps));
  auto last = static_cast<std::int64_t>(std::ceil(clip.t_end * info.fps)) - 1;
  first = std::max<std::int64_t>(first, 0);
  last = std::min<std::int64_t>(last, info.frame_count - 1);
  return {first, last};
}

std::int64_t draw_frame_index(std::uint64_t seed, const std::string& clip_id, std::int64_t first, std::int64_t last) {
  Rng rng(derive_seed(seed, clip_id));
  std::uniform_int_distribution<std::int64_t> dist(first, last);
  return dist(rng);
}

std::vector<FrameSample> sample_frames(const std::vector<ClipLabel>& manifest, const VideoReader& reader,
                                       std::uint64_t seed, std::vector<SkipEntry>* skipped, int workers) {
  std::vector<std::optional<FrameSample>> slots(manifest.size());
  std::vector<std::optional<SkipEntry>> skips(manifest.size());
  parallel_for(manifest.size(), workers, [&](std::size_t i) {
    const ClipLabel& clip = manifest[i];
    try {
      const VideoInfo info = reader.probe(clip.video_uri);
      const auto [first, last] = clip_frame_range(clip, info);
      if (first > last) {
        skips[i] = SkipEntry{clip.clip_id, "clip covers no frames"};
        return;
      }
      FrameSample s;
      s.clip_id = clip.clip_id;
      s.frame_index = draw_frame_index(seed, clip.clip_id, first, last);
      s.image = reader.read(clip.video_uri, s.frame_index);
      s.label = clip.au;
      s.subject_id = clip.subject_id;
      slots[i] = std::move(s);
    } catch (const std::exception& e) {
      skips[i] = SkipEntry{clip.clip_id, e.what()};
    }
  });
  std::vector<FrameSample> out;
  out.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (slots[i]) out.push_back(std::move(*slots[i]));
    if (skips[i] && skipped) skipped->push_back(*skips[i]);
  }
  return out;
}

void write_skip_report(const fs::path& path, const std::vector<SkipEntry>& skipped) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write skip report '" + path.string() + "'");
  for (const auto& s : skipped) out << json{{"clip_id", s.clip_id}, {"reason", s.reason}}.dump() << '\n';
}

void write_frame_cache(const fs::path& dir, const std::vector<FrameSample>& samples) {
  fs::create_directories(dir);
  std::ofstream index(dir / "index.jsonl", std::ios::trunc);
  if (!index) throw Error("cannot write frame index in '" + dir.string() + "'");
  for (const auto& s : samples) {
    const std::string name = s.clip_id + "_" + std::to_string(s.frame_index) + ".png";
    if (!cv::imwrite((dir / name).string(), s.image)) throw Error("cannot write frame '" + name + "'");
    index << json{{"clip_id", s.clip_id},
                  {"frame_index", s.frame_index},
                  {"subject_id", s.subject_id},
                  {"au", s.label.str()},
                  {"path", name}}
                 .dump()
          << '\n';
  }
}

std::vector<FrameSample> read_frame_cache(const fs::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw Error("cannot open frame index '" + index_path.string() + "'");
  std::vector<FrameSample> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    try {
      const json obj = json::parse(line);
      FrameSample s;
      s.clip_id = obj.at("clip_id").get<std::string>();
      s.frame_index = obj.at("frame_index").get<std::int64_t>();
      s.subject_id = obj.at("subject_id").get<std::string>();
      s.label = AuCode(obj.at("au").get<std::string>());
      const fs::path p = index_path.parent_path() / obj.at("path").get<std::string>();
      s.image = cv::imread(p.string(), cv::IMREAD_COLOR);
      if (s.image.empty()) throw Error("cannot read cached frame '" + p.string() + "'");
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError("frame index row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

// --------------------------------------------------------- binary datasets

BalancedSet build_binary_dataset(const std::vector<FrameSample>& samples, const AuCode& target_au,
                                 const std::set<std::string>& split_subjects, std::uint64_t seed, Split split) {
  BalancedSet set;
  set.target_au = target_au;
  set.split = split;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!split_subjects.contains(s.subject_id)) continue;
    if (s.label == target_au) {
      set.positives.push_back(s);
    } else {
      eligible.push_back(i);
    }
  }
  if (set.positives.empty()) {
    throw InvalidArgument("no positives for " + target_au.str() + " in " + std::string(to_string(split)) + " split");
  }
  if (eligible.size() < set.positives.size()) {
    throw InvalidArgument("insufficient negatives for " + target_au.str() + " in " +
                          std::string(to_string(split)) + " split: need " + std::to_string(set.positives.size()) +
                          ", have " + std::to_string(eligible.size()) + " (shortfall " +
                          std::to_string(set.positives.size() - eligible.size()) + ")");
  }
  Rng rng(derive_seed(derive_seed(seed, "negatives"), target_au.str() + "/" + std::string(to_string(split))));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(set.positives.size());
  std::sort(eligible.begin(), eligible.end());
  for (auto i : eligible) set.negatives.push_back(samples[i]);
  return set;
}

std::vector<FoldSplit> make_subject_folds(const std::vector<std::string>& subjects) {
  if (subjects.size() != static_cast<std::size_t>(kSubjectCount)) {
    throw InvalidArgument("make_subject_folds: expected " + std::to_string(kSubjectCount) + " subjects, got " +
                          std::to_string(subjects.size()));
  }
  if (std::set<std::string>(subjects.begin(), subjects.end()).size() != subjects.size()) {
    throw InvalidArgument("make_subject_folds: subjects must be distinct");
  }
  std::vector<FoldSplit> folds;
  for (int i = 0; i < kSubjectCount; ++i) {
    FoldSplit f;
    f.fold_index = i;
    f.test_subject = subjects[static_cast<std::size_t>(i)];
    f.val_subject = subjects[static_cast<std::size_t>((i + 1) % kSubjectCount)];
    for (const auto& s : subjects) {
      if (s != f.test_subject && s != f.val_subject) f.train_subjects.insert(s);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

}  // namespace equicascade::data
