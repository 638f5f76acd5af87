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
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "equicascade/au_code.hpp"

namespace equicascade::data {

inline constexpr int kSubjectCount = 8;
inline constexpr double kMinClipSeconds = 0.05;
inline constexpr double kMaxClipSeconds = 120.0;

/// One labeled video clip from the manifest.
struct ClipLabel {
  std::string clip_id;
  std::string subject_id;
  AuCode au{"AU101"};
  double t_start = 0;
  double t_end = 0;
  std::string video_uri;

  double duration() const { return t_end - t_start; }
};

/// A single frame drawn from a clip.
struct FrameSample {
  std::string clip_id;
  std::int64_t frame_index = 0;
  cv::Mat image;  // 8-bit BGR
  AuCode label{"AU101"};
  std::string subject_id;
};

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split split);

/// Per-AU binary dataset with exactly as many negatives as positives.
struct BalancedSet {
  std::vector<FrameSample> positives;
  std::vector<FrameSample> negatives;
  AuCode target_au{"AU101"};
  Split split = Split::kTrain;

  std::size_t size() const { return positives.size() + negatives.size(); }
};

/// One cross-validation fold over the eight subjects.
struct FoldSplit {
  int fold_index = 0;
  std::set<std::string> train_subjects;
  std::string val_subject;
  std::string test_subject;

  const std::set<std::string> subjects(Split split) const;
};

// ----------------------------------------------------------------- manifest

/// Reads a manifest. Files ending in ".csv" are parsed as CSV with a header
/// row naming the six columns; anything else is JSONL. Relative video_uri
/// values are resolved against the manifest's directory. Durations outside
/// [0.05 s, 120 s] produce a warning. Throws ParseError naming the row (and
/// field) for schema violations, unknown AU codes, duplicate clip ids, and
/// for more than eight distinct subjects.
std::vector<ClipLabel> load_manifest(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

std::vector<ClipLabel> parse_manifest_jsonl(std::istream& in, const std::filesystem::path& base_dir,
                                            std::vector<std::string>* warnings = nullptr);
std::vector<ClipLabel> parse_manifest_csv(std::istream& in, const std::filesystem::path& base_dir,
                                          std::vector<std::string>* warnings = nullptr);

/// Writes JSONL; video_uri is written relative to `path`'s directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ClipLabel>& clips);

/// Clip count for every roster code (absent codes map to 0).
std::map<std::string, int> class_counts(const std::vector<ClipLabel>& manifest);

/// Codes with count strictly greater than min_count, minus `exclude`,
/// sorted lexicographically.
std::vector<AuCode> select_classes(const std::map<std::string, int>& counts, int min_count = 200,
                                   const std::vector<AuCode>& exclude = default_excluded_codes());

/// Subjects in first-appearance order.
std::vector<std::string> subjects_in(const std::vector<ClipLabel>& manifest);

// ----------------------------------------------------------- frame sampling

struct VideoInfo {
  std::int64_t frame_count = 0;
  double fps = 0;
  /// Still images stand in for single-frame clips regardless of timing.
  bool still = false;
};

/// Source of frames. Implementations must be safe to call from several
/// threads at once.
class VideoReader {
 public:
  virtual ~VideoReader() = default;
  /// Throws Error if the source cannot be opened.
  virtual VideoInfo probe(const std::string& uri) const = 0;
  virtual cv::Mat read(const std::string& uri, std::int64_t frame_index) const = 0;
};

/// cv::VideoCapture for videos; png/jpg/bmp files are single-frame stills.
class OpenCvVideoReader final : public VideoReader {
 public:
  VideoInfo probe(const std::string& uri) const override;
  cv::Mat read(const std::string& uri, std::int64_t frame_index) const override;
};

/// Inclusive frame range [first, last] covered by a clip, clamped to the
/// video. first > last means the clip covers no frames.
std::pair<std::int64_t, std::int64_t> clip_frame_range(const ClipLabel& clip, const VideoInfo& info);

struct SkipEntry {
  std::string clip_id;
  std::string reason;
};

/// Draws one frame uniformly from each clip. The generator for a clip is
/// seeded from (seed, clip_id), so results do not depend on clip order or
/// worker count. Unreadable clips go to `skipped` and are left out.
std::vector<FrameSample> sample_frames(const std::vector<ClipLabel>& manifest, const VideoReader& reader,
                                       std::uint64_t seed, std::vector<SkipEntry>* skipped = nullptr,
                                       int workers = 1);

/// Uniform index in [first, last] for the clip's derived generator.
std::int64_t draw_frame_index(std::uint64_t seed, const std::string& clip_id, std::int64_t first, std::int64_t last);

void write_skip_report(const std::filesystem::path& path, const std::vector<SkipEntry>& skipped);

/// Writes <clip_id>_<frame_index>.png per sample and an index.jsonl with labels.
void write_frame_cache(const std::filesystem::path& dir, const std::vector<FrameSample>& samples);
std::vector<FrameSample> read_frame_cache(const std::filesystem::path& index_path);

// --------------------------------------------------------- binary datasets

/// Positives are every sample labeled `target_au` whose subject is in
/// `split_subjects`; negatives are drawn uniformly without replacement from
/// the remaining samples of those subjects, as many as there are positives.
/// Both lists keep input order.
BalancedSet build_binary_dataset(const std::vector<FrameSample>& samples, const AuCode& target_au,
                                 const std::set<std::string>& split_subjects, std::uint64_t seed,
                                 Split split = Split::kTrain);

/// Fold i tests subjects[i], validates on subjects[(i+1) % 8] and trains on
/// the remaining six.
std::vector<FoldSplit> make_subject_folds(const std::vector<std::string>& subjects);

}  // namespace equicascade::data
