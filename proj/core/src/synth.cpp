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

#include "equicascade/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "equicascade/annotations.hpp"
#include "equicascade/error.hpp"
#include "equicascade/parallel.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::synth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Style {
  cv::Vec3d background;
  cv::Vec3d stripe;
  double stripe_period;
  double stripe_angle;
  cv::Vec3d coat;
  cv::Vec3d muzzle;
};

cv::Vec3d random_color(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double a = u(rng);
  const double b = u(rng);
  const double c = u(rng);
  return {a, b, c};
}

Style make_style(std::uint64_t style_seed, int subject) {
  Rng rng(derive_seed(derive_seed(style_seed, "subject-style"), static_cast<std::uint64_t>(subject)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Style s;
  s.background = random_color(rng, 60, 200);
  s.stripe = random_color(rng, -40, 40);
  s.stripe_period = 8 + 24 * u(rng);
  s.stripe_angle = CV_PI * u(rng);
  s.coat = random_color(rng, 40, 150);
  s.muzzle = s.coat * 0.5 + cv::Vec3d(90, 90, 90) + random_color(rng, -15, 15);
  return s;
}

cv::Scalar to_scalar(const cv::Vec3d& v) { return {v[0], v[1], v[2]}; }

/// Glyph sub-box of each AU, relative to its region box.
std::array<double, 4> glyph_layout(const std::string& au) {
  if (au == "AU101") return {0.05, 0.0, 0.95, 0.45};
  if (au == "AD1") return {0.15, 0.2, 0.85, 0.9};
  if (au == "AU145" || au == "AU47") return {0.15, 0.25, 0.85, 0.85};
  if (au == "AU5") return {0.15, 0.15, 0.85, 0.85};
  if (au == "AU25") return {0.15, 0.6, 0.85, 1.0};
  if (au == "AD19") return {0.25, 0.65, 0.75, 1.0};
  if (au == "AD38") return {0.1, 0.1, 0.9, 0.6};
  if (au == "AUH13") return {0.1, 0.0, 0.9, 0.5};
  throw InvalidArgument("no synthetic glyph for " + au);
}

cv::Vec3d glyph_color(const std::string& au) {
  if (au == "AD1" || au == "AU5") return {245, 245, 245};
  if (au == "AD19") return {70, 60, 210};
  return {15, 15, 15};
}

cv::Rect pixel_rect(const BoundingBox& b, const cv::Size& size) {
  const int x0 = std::clamp(static_cast<int>(std::floor(b.x_min)), 0, size.width);
  const int y0 = std::clamp(static_cast<int>(std::floor(b.y_min)), 0, size.height);
  const int x1 = std::clamp(static_cast<int>(std::ceil(b.x_max)), 0, size.width);
  const int y1 = std::clamp(static_cast<int>(std::ceil(b.y_max)), 0, size.height);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

}  // namespace

BoundingBox render_au_feature(cv::Mat& canvas, const BoundingBox& region_box, const AuCode& au, bool present,
                              double contrast, Rng& rng) {
  const auto layout = glyph_layout(au.str());
  std::uniform_real_distribution<double> jitter(-0.06, 0.06);
  const double jx = jitter(rng);
  const double jy = jitter(rng);
  const double jt = 1.0 + jitter(rng);

  const double rw = region_box.width();
  const double rh = region_box.height();
  const BoundingBox glyph{region_box.x_min + layout[0] * rw, region_box.y_min + layout[1] * rh,
                          region_box.x_min + layout[2] * rw, region_box.y_min + layout[3] * rh};
  const cv::Rect rect = pixel_rect(glyph, canvas.size());
  if (rect.width < 2 || rect.height < 2) return glyph;
  cv::Mat roi = canvas(rect);

  const cv::Scalar mean = cv::mean(roi);
  const cv::Vec3d base(mean[0], mean[1], mean[2]);
  const cv::Scalar color = to_scalar(base + contrast * (glyph_color(au.str()) - base));

  const double gw = rect.width;
  const double gh = rect.height;
  const double m = std::min(gw, gh);
  auto pt = [&](double fx, double fy) {
    return cv::Point(static_cast<int>(std::lround((fx + jx) * gw)), static_cast<int>(std::lround((fy + jy) * gh)));
  };
  auto len = [](double v) { return std::max(1, static_cast<int>(std::lround(v))); };
  const int thick = len(0.12 * m * jt);
  const std::string& code = au.str();

  if (code == "AU101") {
    if (present) {
      const std::vector<cv::Point> wedge{pt(0.1, 0.8), pt(0.35, 0.15), pt(0.9, 0.65)};
      cv::polylines(roi, wedge, false, color, thick, cv::LINE_AA);
    } else {
      cv::line(roi, pt(0.1, 0.65), pt(0.9, 0.65), color, thick, cv::LINE_AA);
    }
  } else if (code == "AD1") {
    if (present) {
      cv::circle(roi, pt(0.5, 0.5), len(0.38 * m * jt), color, len(0.1 * m), cv::LINE_AA);
    } else {
      cv::circle(roi, pt(0.5, 0.5), len(0.12 * m * jt), color, cv::FILLED, cv::LINE_AA);
    }
  } else if (code == "AU145") {
    if (present) {
      cv::rectangle(roi, pt(0.1, 0.44), pt(0.9, 0.56), color, cv::FILLED, cv::LINE_AA);
    } else {
      cv::circle(roi, pt(0.5, 0.5), len(0.3 * m * jt), color, cv::FILLED, cv::LINE_AA);
    }
  } else if (code == "AU47") {
    if (present) {
      cv::ellipse(roi, pt(0.5, 0.5), cv::Size(len(0.3 * m * jt), len(0.3 * m * jt)), 0, 0, 180, color, cv::FILLED,
                  cv::LINE_AA);
    } else {
      cv::circle(roi, pt(0.5, 0.5), len(0.3 * m * jt), color, cv::FILLED, cv::LINE_AA);
    }
  } else if (code == "AU5") {
    cv::circle(roi, pt(0.5, 0.5), len((present ? 0.42 : 0.2) * m * jt), color, cv::FILLED, cv::LINE_AA);
  } else if (code == "AU25") {
    if (present) {
      cv::rectangle(roi, pt(0.1, 0.2), pt(0.9, 0.7), color, cv::FILLED, cv::LINE_AA);
    } else {
      cv::line(roi, pt(0.1, 0.3), pt(0.9, 0.3), color, thick, cv::LINE_AA);
    }
  } else if (code == "AD19") {
    if (present) {
      cv::ellipse(roi, pt(0.5, 0.5), cv::Size(len(0.35 * gw * jt), len(0.35 * gh * jt)), 0, 0, 360, color,
                  cv::FILLED, cv::LINE_AA);
    } else {
      cv::line(roi, pt(0.15, 0.2), pt(0.85, 0.2), color, thick, cv::LINE_AA);
    }
  } else if (code == "AD38") {
    const double ax = present ? 0.18 : 0.07;
    const double ay = present ? 0.3 : 0.1;
    for (double cx : {0.28, 0.72}) {
      cv::ellipse(roi, pt(cx, 0.5), cv::Size(len(ax * gw * jt), len(ay * gh * jt)), 0, 0, 360, color, cv::FILLED,
                  cv::LINE_AA);
    }
  } else if (code == "AUH13") {
    if (present) {
      cv::ellipse(roi, pt(0.5, 0.85), cv::Size(len(0.4 * gw * jt), len(0.55 * gh * jt)), 0, 180, 360, color, thick,
                  cv::LINE_AA);
    } else {
      cv::line(roi, pt(0.1, 0.6), pt(0.9, 0.6), color, thick, cv::LINE_AA);
    }
  }
  return {static_cast<double>(rect.x), static_cast<double>(rect.y), static_cast<double>(rect.x + rect.width),
          static_cast<double>(rect.y + rect.height)};
}

std::vector<std::string> subject_ids(const SynthSpec& spec) {
  std::vector<std::string> ids;
  for (int i = 0; i < spec.subject_count; ++i) ids.push_back(spec.subject_prefix + std::to_string(i + 1));
  return ids;
}

namespace {

struct FramePlan {
  std::string clip_id;
  int subject = 0;
  AuCode label{"AU10"};
  std::optional<AuCode> present;
};

SynthFrame render_frame(const SynthSpec& spec, const Style& style, const FramePlan& plan,
                        const std::vector<AuCode>& aus, std::uint64_t frame_seed) {
  const int W = spec.image_width;
  const int H = spec.image_height;
  Rng rng(frame_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  cv::Mat img(H, W, CV_8UC3);
  const double phase = 2 * CV_PI * u(rng);
  const double ca = std::cos(style.stripe_angle);
  const double sa = std::sin(style.stripe_angle);
  for (int y = 0; y < H; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < W; ++x) {
      const double s = std::sin(2 * CV_PI * (x * ca + y * sa) / style.stripe_period + phase);
      const cv::Vec3d v = style.background + s * style.stripe;
      row[x] = cv::Vec3b(cv::saturate_cast<uchar>(v[0]), cv::saturate_cast<uchar>(v[1]),
                         cv::saturate_cast<uchar>(v[2]));
    }
  }

  // Face ellipse, fully inside the frame.
  const double frac = spec.face_min_fraction + (spec.face_max_fraction - spec.face_min_fraction) * u(rng);
  const double fw = frac * W;
  const double fh = 1.25 * fw;
  const double cx = fw / 2 + 1 + (W - fw - 2) * u(rng);
  const double cy = fh / 2 + 1 + (H - fh - 2) * u(rng);
  SynthFrame f;
  f.face = {cx - fw / 2, cy - fh / 2, cx + fw / 2, cy + fh / 2};
  const cv::Vec3d coat = style.coat + random_color(rng, -10, 10);
  cv::ellipse(img, cv::Point(static_cast<int>(std::lround(cx)), static_cast<int>(std::lround(cy))),
              cv::Size(static_cast<int>(fw / 2), static_cast<int>(fh / 2)), 0, 0, 360, to_scalar(coat), cv::FILLED,
              cv::LINE_AA);

  auto sub_box = [&](double x0, double y0, double x1, double y1) {
    std::uniform_real_distribution<double> j(-0.03, 0.03);
    const double dx = j(rng);
    const double dy = j(rng);
    return BoundingBox{f.face.x_min + (x0 + dx) * fw, f.face.y_min + (y0 + dy) * fh, f.face.x_min + (x1 + dx) * fw,
                       f.face.y_min + (y1 + dy) * fh};
  };
  f.eye = sub_box(0.15, 0.15, 0.55, 0.45);
  f.lower_face = sub_box(0.2, 0.62, 0.8, 0.92);

  // Eye socket and eye.
  auto center = [](const BoundingBox& b) {
    return cv::Point(static_cast<int>(std::lround(b.center_x())), static_cast<int>(std::lround(b.center_y())));
  };
  auto axes = [](const BoundingBox& b, double fx, double fy) {
    return cv::Size(std::max(1, static_cast<int>(fx * b.width())), std::max(1, static_cast<int>(fy * b.height())));
  };
  cv::ellipse(img, center(f.eye), axes(f.eye, 0.48, 0.48), 0, 0, 360, to_scalar(coat * 0.55), cv::FILLED,
              cv::LINE_AA);
  cv::ellipse(img, center(f.eye), axes(f.eye, 0.3, 0.22), 0, 0, 360, cv::Scalar(35, 30, 25), cv::FILLED,
              cv::LINE_AA);
  // Muzzle with nostrils and mouth.
  const cv::Vec3d muzzle = style.muzzle + random_color(rng, -8, 8);
  cv::ellipse(img, center(f.lower_face), axes(f.lower_face, 0.5, 0.5), 0, 0, 360, to_scalar(muzzle), cv::FILLED,
              cv::LINE_AA);
  const double lw = f.lower_face.width();
  const double lh = f.lower_face.height();
  for (double nx : {0.3, 0.7}) {
    cv::ellipse(img,
                cv::Point(static_cast<int>(std::lround(f.lower_face.x_min + nx * lw)),
                          static_cast<int>(std::lround(f.lower_face.y_min + 0.35 * lh))),
                cv::Size(std::max(1, static_cast<int>(0.08 * lw)), std::max(1, static_cast<int>(0.1 * lh))), 0, 0,
                360, to_scalar(muzzle * 0.4), cv::FILLED, cv::LINE_AA);
  }

  if (spec.render_glyphs) {
    // Neutral glyphs first so a present glyph is never painted over.
    std::vector<std::pair<AuCode, std::uint64_t>> order;
    for (const auto& au : aus) order.emplace_back(au, derive_seed(frame_seed, au.str()));
    std::stable_partition(order.begin(), order.end(),
                          [&](const auto& e) { return !(plan.present && e.first == *plan.present); });
    for (const auto& [au, glyph_seed] : order) {
      Rng grng(glyph_seed);
      const bool on = plan.present && au == *plan.present;
      const BoundingBox& region = au.region() == FacialRegion::kEye ? f.eye : f.lower_face;
      f.features[au.str()] = render_au_feature(img, region, au, on, spec.glyph_contrast, grng);
    }
  } else {
    for (const auto& au : aus) {
      const auto layout = glyph_layout(au.str());
      const BoundingBox& r = au.region() == FacialRegion::kEye ? f.eye : f.lower_face;
      f.features[au.str()] = {r.x_min + layout[0] * r.width(), r.y_min + layout[1] * r.height(),
                              r.x_min + layout[2] * r.width(), r.y_min + layout[3] * r.height()};
    }
  }

  if (spec.noise_sigma > 0) {
    Rng nrng(derive_seed(frame_seed, "noise"));
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (int y = 0; y < H; ++y) {
      auto* row = img.ptr<uchar>(y);
      for (int x = 0; x < 3 * W; ++x) row[x] = cv::saturate_cast<uchar>(row[x] + noise(nrng));
    }
  }

  f.clip_id = plan.clip_id;
  f.label = plan.label;
  f.image = img;
  return f;
}

std::string pad_number(int v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

}  // namespace

Corpus generate_corpus(const SynthSpec& spec, const std::vector<AuCode>& aus, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw InvalidArgument("generate_corpus: n_per_class must be at least 1");
  if (spec.image_width < 16 || spec.image_height < 16) throw InvalidArgument("generate_corpus: frame too small");
  if (!(spec.face_min_fraction > 0) || spec.face_min_fraction > spec.face_max_fraction) {
    throw InvalidArgument("generate_corpus: face fraction range is empty");
  }
  if (spec.face_max_fraction * spec.image_width + 2 > spec.image_width ||
      1.25 * spec.face_max_fraction * spec.image_width + 2 > spec.image_height) {
    throw InvalidArgument("generate_corpus: face larger than frame");
  }
  if (spec.subject_count < 1) throw InvalidArgument("generate_corpus: need at least one subject");
  const AuCode negative(spec.negative_code);
  for (const auto& au : aus) {
    if (!au.in_scope()) throw InvalidArgument("generate_corpus: " + au.str() + " has no synthetic glyph");
    if (au == negative) throw InvalidArgument("generate_corpus: negative code collides with " + au.str());
  }

  std::vector<FramePlan> plans;
  for (const auto& au : aus) {
    for (int cls = 0; cls < 2; ++cls) {
      for (int k = 0; k < n_per_class; ++k) {
        FramePlan p;
        p.clip_id = au.str() + (cls == 0 ? "_pos_" : "_neg_") + pad_number(k, 5);
        p.subject = k % spec.subject_count;
        p.label = cls == 0 ? au : negative;
        if (cls == 0) p.present = au;
        plans.push_back(std::move(p));
      }
    }
  }

  std::vector<Style> styles;
  for (int s = 0; s < spec.subject_count; ++s) styles.push_back(make_style(spec.style_seed, s));
  const auto ids = subject_ids(spec);

  Corpus corpus;
  corpus.frames.resize(plans.size());
  parallel_for(plans.size(), 0, [&](std::size_t i) {
    const auto& p = plans[i];
    corpus.frames[i] = render_frame(spec, styles[static_cast<std::size_t>(p.subject)], p, aus,
                                    derive_seed(derive_seed(seed, "synth-frame"), p.clip_id));
    corpus.frames[i].subject_id = ids[static_cast<std::size_t>(p.subject)];
  });
  for (const auto& f : corpus.frames) {
    corpus.manifest.push_back({f.clip_id, f.subject_id, f.label, 0.0, 1.0, "frames/" + f.clip_id + ".png"});
  }
  return corpus;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir / "frames");
  std::vector<BoxAnnotation> boxes;
  std::ofstream features(dir / "features.jsonl", std::ios::trunc);
  if (!features) throw Error("cannot write '" + (dir / "features.jsonl").string() + "'");
  for (const auto& f : corpus.frames) {
    const std::string rel = "frames/" + f.clip_id + ".png";
    if (!cv::imwrite((dir / rel).string(), f.image)) throw Error("cannot write '" + rel + "'");
    boxes.push_back({rel, RegionKind::kFace, f.face, f.subject_id});
    boxes.push_back({rel, RegionKind::kEye, f.eye, f.subject_id});
    boxes.push_back({rel, RegionKind::kLowerFace, f.lower_face, f.subject_id});
    for (const auto& [au, b] : f.features) {
      features << json{{"image", rel},       {"au", au},          {"present", f.label.str() == au},
                       {"x_min", b.x_min},   {"y_min", b.y_min},  {"x_max", b.x_max},
                       {"y_max", b.y_max}}
                      .dump()
               << '\n';
    }
  }
  write_box_annotations(dir / "boxes.jsonl", boxes);
  std::vector<data::ClipLabel> manifest = corpus.manifest;
  for (auto& c : manifest) c.video_uri = (dir / c.video_uri).string();
  data::write_manifest(dir / "manifest.jsonl", manifest);
}

Corpus read_corpus(const fs::path& dir) {
  Corpus corpus;
  corpus.manifest = data::load_manifest(dir / "manifest.jsonl");
  std::map<std::string, std::size_t> by_image;
  for (const auto& c : corpus.manifest) {
    SynthFrame f;
    f.clip_id = c.clip_id;
    f.subject_id = c.subject_id;
    f.label = c.au;
    f.image = cv::imread(c.video_uri, cv::IMREAD_COLOR);
    if (f.image.empty()) throw Error("cannot read frame '" + c.video_uri + "'");
    by_image[fs::path(c.video_uri).lexically_normal().string()] = corpus.frames.size();
    corpus.frames.push_back(std::move(f));
  }
  auto frame_for = [&](const std::string& image) -> SynthFrame& {
    auto it = by_image.find(fs::path(image).lexically_normal().string());
    if (it == by_image.end()) throw ParseError("annotation refers to unknown image '" + image + "'");
    return corpus.frames[it->second];
  };
  for (const auto& a : load_box_annotations(dir / "boxes.jsonl")) {
    SynthFrame& f = frame_for(a.image);
    (a.kind == RegionKind::kFace ? f.face : a.kind == RegionKind::kEye ? f.eye : f.lower_face) = a.box;
  }
  std::ifstream in(dir / "features.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json obj = json::parse(line);
    SynthFrame& f = frame_for((dir / obj.at("image").get<std::string>()).string());
    f.features[obj.at("au").get<std::string>()] = {obj.at("x_min").get<double>(), obj.at("y_min").get<double>(),
                                                   obj.at("x_max").get<double>(), obj.at("y_max").get<double>()};
  }
  return corpus;
}

}  // namespace equicascade::synth
