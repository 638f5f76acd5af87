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

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "equicascade/dataset.hpp"
#include "equicascade/error.hpp"
#include "oracles.hpp"

using namespace equicascade;
using namespace equicascade::data;

namespace {

std::string row(const std::string& id, const std::string& subject, const std::string& au, double t0, double t1,
                const std::string& uri = "v.mp4") {
  std::ostringstream os;
  os << R"({"clip_id":")" << id << R"(","subject_id":")" << subject << R"(","au":")" << au
     << R"(","t_start":)" << t0 << R"(,"t_end":)" << t1 << R"(,"video_uri":")" << uri << R"("})" << '\n';
  return os.str();
}

std::vector<ClipLabel> parse(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return parse_manifest_jsonl(in, "/data", warnings);
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

/// Frames are 1x1 images whose blue channel holds the frame index.
class FakeReader final : public VideoReader {
 public:
  std::map<std::string, VideoInfo> videos;

  VideoInfo probe(const std::string& uri) const override {
    auto it = videos.find(uri);
    if (it == videos.end()) throw Error("no such video: " + uri);
    return it->second;
  }
  cv::Mat read(const std::string&, std::int64_t frame_index) const override {
    return cv::Mat(1, 1, CV_8UC3, cv::Scalar(static_cast<double>(frame_index % 256), 0, 0));
  }
};

FrameSample frame(const std::string& clip, const std::string& subject, const std::string& au) {
  FrameSample s;
  s.clip_id = clip;
  s.subject_id = subject;
  s.label = AuCode(au);
  return s;
}

const std::vector<std::string> kSubjects{"S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8"};

}  // namespace

TEST(Manifest, ParsesRowsAndResolvesUris) {
  std::vector<std::string> warnings;
  const auto clips = parse(row("a", "S1", "AU101", 1.0, 2.5) + "\n" + row("b", "S2", "AD38", 0, 0.05, "/abs/x.mp4") +
                               row("c", "S1", "AU10", 3, 4),
                           &warnings);
  ASSERT_EQ(clips.size(), 3u);
  EXPECT_EQ(clips[0].au, AuCode("AU101"));
  EXPECT_DOUBLE_EQ(clips[0].duration(), 1.5);
  EXPECT_EQ(clips[0].video_uri, "/data/v.mp4");
  EXPECT_EQ(clips[1].video_uri, "/abs/x.mp4");
  EXPECT_TRUE(warnings.empty()) << warnings.front();
  EXPECT_EQ(subjects_in(clips), (std::vector<std::string>{"S1", "S2"}));
}

TEST(Manifest, DurationWarnings) {
  std::vector<std::string> warnings;
  parse(row("a", "S1", "AU101", 0, 0.04) + row("b", "S1", "AU101", 0, 121), &warnings);
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[0].find("row 1"), std::string::npos);
  EXPECT_NE(warnings[1].find("row 2"), std::string::npos);
}

TEST(Manifest, SchemaErrorsNameRowAndField) {
  const std::string missing =
      parse_error(row("a", "S1", "AU101", 0, 1) + R"({"clip_id":"b","au":"AU101","t_start":0,"t_end":1,"video_uri":"v"})");
  EXPECT_NE(missing.find("row 2"), std::string::npos) << missing;
  EXPECT_NE(missing.find("subject_id"), std::string::npos) << missing;

  const std::string unknown = parse_error(row("a", "S1", "AU999", 0, 1));
  EXPECT_NE(unknown.find("AU999"), std::string::npos);
  const std::string dup = parse_error(row("a", "S1", "AU101", 0, 1) + row("a", "S2", "AU101", 0, 1));
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
  EXPECT_NE(parse_error(row("a", "S1", "AU101", 2, 1)).find("t_end"), std::string::npos);
  EXPECT_NE(parse_error("{not json}\n").find("row 1"), std::string::npos);
  EXPECT_NE(parse_error(R"({"clip_id":"a","subject_id":"S","au":"AU101","t_start":"x","t_end":1,"video_uri":"v"})")
                .find("t_start"),
            std::string::npos);

  std::string nine;
  for (int i = 0; i < 9; ++i) nine += row("c" + std::to_string(i), "S" + std::to_string(i), "AU101", 0, 1);
  EXPECT_NE(parse_error(nine).find("9 subjects"), std::string::npos);
}

TEST(Manifest, CsvAndFileRoundTrip) {
  std::istringstream csv(
      "video_uri,clip_id,subject_id,au,t_start,t_end\n"
      "clips/a.mp4,a,S1,AU25,0.5,1.5\n"
      "\"b,1.mp4\",b,S2,EAD104,0,2\n");
  const auto clips = parse_manifest_csv(csv, "/root");
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].video_uri, "/root/clips/a.mp4");
  EXPECT_EQ(clips[1].video_uri, "/root/b,1.mp4");
  EXPECT_EQ(clips[1].au, AuCode("EAD104"));

  const auto dir = oracle::scratch_dir("manifest");
  std::vector<ClipLabel> rel = parse(row("x", "S1", "AU47", 0, 1, "clips/x.mp4"));
  rel[0].video_uri = (dir / "clips/x.mp4").string();
  write_manifest(dir / "m.jsonl", rel);
  const auto back = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].video_uri, rel[0].video_uri);
  EXPECT_EQ(back[0].au, AuCode("AU47"));
  EXPECT_THROW(load_manifest(dir / "absent.jsonl"), Error);
}

TEST(ClassSelection, ReferenceCountsGiveNineCodes) {
  const auto selected = select_classes(oracle::reference_class_counts());
  std::vector<std::string> got;
  for (const auto& c : selected) got.push_back(c.str());
  EXPECT_EQ(got, oracle::reference_selection());
  // the ear descriptors pass the count but are excluded
  EXPECT_EQ(select_classes(oracle::reference_class_counts(), 200, {}).size(), 11u);
}

TEST(ClassSelection, StrictThresholdAndEmptyInput) {
  EXPECT_TRUE(select_classes({{"AU101", 200}}).empty());
  EXPECT_EQ(select_classes({{"AU101", 201}}).size(), 1u);
  EXPECT_TRUE(select_classes({}).empty());
  EXPECT_THROW(select_classes({{"AU101", 500}}, 0), InvalidArgument);

  std::vector<ClipLabel> clips(3);
  clips[0].au = clips[1].au = AuCode("AU5");
  clips[2].au = AuCode("AD1");
  const auto counts = class_counts(clips);
  EXPECT_EQ(counts.size(), au_roster().size());
  EXPECT_EQ(counts.at("AU5"), 2);
  EXPECT_EQ(counts.at("AU101"), 0);
}

TEST(FrameSampling, ClipRange) {
  ClipLabel c;
  c.t_start = 1.0;
  c.t_end = 2.0;
  EXPECT_EQ(clip_frame_range(c, {100, 10.0, false}), (std::pair<std::int64_t, std::int64_t>{10, 19}));
  EXPECT_EQ(clip_frame_range(c, {15, 10.0, false}), (std::pair<std::int64_t, std::int64_t>{10, 14}));
  EXPECT_EQ(clip_frame_range(c, {1, 0.0, true}), (std::pair<std::int64_t, std::int64_t>{0, 0}));
  const auto past = clip_frame_range(c, {5, 10.0, false});
  EXPECT_GT(past.first, past.second);
}

// Chi-square style check: every count of a 4-frame clip within 5 sigma of N/4.
TEST(FrameSampling, UniformOverClipFrames) {
  std::array<int, 4> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[draw_frame_index(42, "clip" + std::to_string(i), 100, 103) - 100];
  const double expect = n / 4.0;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  double chi2 = 0;
  for (int c : counts) {
    EXPECT_LT(std::abs(c - expect), 5 * sigma) << c;
    chi2 += (c - expect) * (c - expect) / expect;
  }
  EXPECT_LT(chi2, 16.27);  // p = 0.001, 3 dof
  EXPECT_EQ(draw_frame_index(7, "x", 0, 1000), draw_frame_index(7, "x", 0, 1000));
}

TEST(FrameSampling, DeterministicAndReportsSkips) {
  FakeReader reader;
  reader.videos["/v/a.mp4"] = {300, 30.0, false};
  reader.videos["/v/b.mp4"] = {300, 30.0, false};
  std::vector<ClipLabel> clips;
  for (int i = 0; i < 20; ++i) {
    ClipLabel c;
    c.clip_id = "c" + std::to_string(i);
    c.subject_id = "S" + std::to_string(i % 3);
    c.au = AuCode(i % 2 ? "AU101" : "AU10");
    c.t_start = 0.5 * i;
    c.t_end = 0.5 * i + 0.5;
    c.video_uri = i == 7 ? "/v/missing.mp4" : (i % 2 ? "/v/a.mp4" : "/v/b.mp4");
    clips.push_back(c);
  }
  std::vector<SkipEntry> skipped;
  const auto a = sample_frames(clips, reader, 9, &skipped, 1);
  ASSERT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0].clip_id, "c7");
  ASSERT_EQ(a.size(), 19u);
  for (const auto& s : a) {
    const int i = std::stoi(s.clip_id.substr(1));
    EXPECT_GE(s.frame_index, 15 * i);
    EXPECT_LE(s.frame_index, 15 * i + 14);
    EXPECT_EQ(s.image.at<cv::Vec3b>(0, 0)[0], s.frame_index % 256);
    EXPECT_EQ(s.label, clips[static_cast<std::size_t>(i)].au);
  }
  // same result for other worker counts and clip orders
  const auto b = sample_frames(clips, reader, 9, nullptr, 3);
  std::vector<ClipLabel> reversed(clips.rbegin(), clips.rend());
  const auto c = sample_frames(reversed, reader, 9);
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frame_index, b[i].frame_index);
    EXPECT_EQ(a[i].frame_index, c[a.size() - 1 - i].frame_index);
  }
}

TEST(FrameSampling, CacheRoundTrip) {
  const auto dir = oracle::scratch_dir("frame_cache");
  std::vector<FrameSample> samples{frame("a", "S1", "AU101"), frame("b", "S2", "AU10")};
  samples[0].frame_index = 3;
  samples[0].image = cv::Mat(4, 5, CV_8UC3, cv::Scalar(1, 2, 3));
  samples[1].image = cv::Mat(2, 2, CV_8UC3, cv::Scalar(9, 8, 7));
  write_frame_cache(dir, samples);
  const auto back = read_frame_cache(dir / "index.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].frame_index, 3);
  EXPECT_EQ(back[1].label, AuCode("AU10"));
  EXPECT_EQ(cv::norm(back[0].image, samples[0].image, cv::NORM_INF), 0.0);
}

TEST(BinaryDataset, ExactBalanceAndPurity) {
  std::vector<FrameSample> samples;
  std::mt19937_64 rng(1);
  const std::vector<std::string> codes{"AU101", "AU10", "AD38", "AU47", "EAD104"};
  for (int i = 0; i < 400; ++i) {
    samples.push_back(frame("c" + std::to_string(i), kSubjects[rng() % 8], codes[rng() % codes.size()]));
  }
  const auto folds = make_subject_folds(kSubjects);
  for (const auto& fold : folds) {
    for (auto split : {Split::kTrain, Split::kVal, Split::kTest}) {
      const auto subjects = fold.subjects(split);
      const auto set = build_binary_dataset(samples, AuCode("AU101"), subjects, 5, split);
      EXPECT_EQ(set.positives.size(), set.negatives.size());
      std::set<std::string> seen;
      for (const auto& s : set.positives) {
        EXPECT_EQ(s.label, AuCode("AU101"));
        EXPECT_TRUE(subjects.contains(s.subject_id));
        EXPECT_TRUE(seen.insert(s.clip_id).second);
      }
      for (const auto& s : set.negatives) {
        EXPECT_NE(s.label, AuCode("AU101"));
        EXPECT_TRUE(subjects.contains(s.subject_id));
        EXPECT_TRUE(seen.insert(s.clip_id).second);
      }
      std::size_t expected_pos = 0;
      for (const auto& s : samples) expected_pos += s.label == AuCode("AU101") && subjects.contains(s.subject_id);
      EXPECT_EQ(set.positives.size(), expected_pos);
    }
  }
  const auto a = build_binary_dataset(samples, AuCode("AU101"), {"S1", "S2"}, 5);
  const auto b = build_binary_dataset(samples, AuCode("AU101"), {"S1", "S2"}, 5);
  for (std::size_t i = 0; i < a.negatives.size(); ++i) EXPECT_EQ(a.negatives[i].clip_id, b.negatives[i].clip_id);
}

TEST(BinaryDataset, Errors) {
  std::vector<FrameSample> samples{frame("a", "S1", "AU101"), frame("b", "S1", "AU101"), frame("c", "S1", "AU10"),
                                   frame("d", "S2", "AU10")};
  try {
    build_binary_dataset(samples, AuCode("AU101"), {"S1"}, 1);
    FAIL() << "expected shortfall";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("shortfall 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_binary_dataset(samples, AuCode("AU101"), {"S2"}, 1), InvalidArgument);
  EXPECT_EQ(build_binary_dataset(samples, AuCode("AU101"), {"S1", "S2"}, 1).size(), 4u);
}

TEST(Folds, RotationExclusivityAndCoverage) {
  const auto folds = make_subject_folds(kSubjects);
  ASSERT_EQ(folds.size(), 8u);
  std::map<std::string, int> tested;
  for (const auto& f : folds) {
    EXPECT_EQ(f.test_subject, kSubjects[static_cast<std::size_t>(f.fold_index)]);
    EXPECT_EQ(f.val_subject, kSubjects[static_cast<std::size_t>((f.fold_index + 1) % 8)]);
    EXPECT_EQ(f.train_subjects.size(), 6u);
    EXPECT_FALSE(f.train_subjects.contains(f.test_subject));
    EXPECT_FALSE(f.train_subjects.contains(f.val_subject));
    EXPECT_NE(f.val_subject, f.test_subject);
    ++tested[f.test_subject];
  }
  for (const auto& s : kSubjects) EXPECT_EQ(tested[s], 1);
  EXPECT_THROW(make_subject_folds({"A", "B"}), InvalidArgument);
  EXPECT_THROW(make_subject_folds({"A", "A", "B", "C", "D", "E", "F", "G"}), InvalidArgument);
}
