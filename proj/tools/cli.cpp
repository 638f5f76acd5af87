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

#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "equicascade/annotations.hpp"
#include "equicascade/cascade.hpp"
#include "equicascade/classifier.hpp"
#include "equicascade/config.hpp"
#include "equicascade/dataset.hpp"
#include "equicascade/detector.hpp"
#include "equicascade/error.hpp"
#include "equicascade/eval.hpp"
#include "equicascade/experiment.hpp"
#include "equicascade/image_ops.hpp"
#include "equicascade/parallel.hpp"
#include "equicascade/rng.hpp"
#include "equicascade/saliency.hpp"
#include "equicascade/synth.hpp"

namespace equicascade::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Failure with an explicit error kind for the diagnostic line.
class CliError : public Error {
 public:
  CliError(std::string kind, const std::string& message) : Error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct Context {
  std::string command;
  RunConfig cfg;
  fs::path out;
  bool force = false;
  int workers = 1;
  std::uint64_t seed = 0;
  std::ostream* out_stream = nullptr;
  std::ostream* err_stream = nullptr;

  void log(const std::string& msg) const { *err_stream << "[" << command << "] " << msg << '\n'; }
  std::uint64_t stage_seed(const std::string& name) const { return derive_seed(seed, name); }
};

// ------------------------------------------------------------------ helpers

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
}

bool occupied(const fs::path& p) {
  if (!fs::exists(p)) return false;
  if (fs::is_directory(p)) return !fs::is_empty(p);
  return true;
}

/// Refuses to touch existing outputs unless --force was given.
void guard(const Context& ctx, const std::vector<fs::path>& paths) {
  if (ctx.force) return;
  for (const auto& p : paths) {
    if (occupied(p)) throw CliError("output-exists", "'" + p.string() + "' already exists (pass --force to overwrite)");
  }
}

/// Writes the effective configuration next to the outputs. "out" and
/// "workers" are left out: they do not influence results.
void write_run_record(const Context& ctx) {
  std::string text = "# equicascade " + ctx.command + "\n";
  for (const auto& [key, value] : ctx.cfg.values()) {
    if (key == "out" || key == "workers") continue;
    text += key + " = " + value.repr() + "\n";
  }
  write_text(ctx.out / (ctx.command + ".run.toml"), text);
}

std::optional<AuCode> au_value(Context& ctx, const std::string& key, const std::string& text) {
  auto au = AuCode::parse(text);
  if (!au) {
    ctx.cfg.add_violation(key + ": unknown AU code '" + text + "'");
    return std::nullopt;
  }
  if (!au->in_scope()) {
    ctx.cfg.add_violation(key + ": '" + text + "' is not one of the classifier codes");
    return std::nullopt;
  }
  return au;
}

std::vector<AuCode> au_list(Context& ctx, const std::string& key, const std::vector<std::string>& fallback) {
  std::vector<AuCode> out;
  for (const auto& s : ctx.cfg.get_string_list(key, fallback)) {
    if (auto au = au_value(ctx, key, s)) out.push_back(*au);
  }
  if (out.empty() && ctx.cfg.has(key)) ctx.cfg.add_violation(key + ": empty list");
  return out;
}

std::vector<std::string> in_scope_names() {
  std::vector<std::string> out;
  for (const auto& c : in_scope_codes()) out.push_back(c.str());
  return out;
}

int positive_int(Context& ctx, const std::string& key, std::int64_t fallback) {
  const auto v = ctx.cfg.get_int(key, fallback);
  if (v < 1 || v > 1'000'000'000) ctx.cfg.add_violation(key + ": must be a positive integer");
  return static_cast<int>(std::clamp<std::int64_t>(v, 1, 1'000'000'000));
}

double positive_double(Context& ctx, const std::string& key, double fallback) {
  const double v = ctx.cfg.get_double(key, fallback);
  if (!(v > 0)) ctx.cfg.add_violation(key + ": must be positive");
  return v;
}

/// Path value resolved against the config file, or empty when unset.
fs::path path_value(Context& ctx, const std::string& key, bool required) {
  if (required) ctx.cfg.require_path(key);
  if (!ctx.cfg.has(key)) return {};
  const fs::path p = ctx.cfg.resolve(ctx.cfg.get_string(key));
  if (!required && !fs::exists(p)) ctx.cfg.add_violation(key + ": path '" + p.string() + "' does not exist");
  return p;
}

/// "detector.<kind>.<name>" when set, else "detector.<name>".
std::string detector_key(const Context& ctx, RegionKind kind, const std::string& name) {
  const std::string specific = "detector." + std::string(to_string(kind)) + "." + name;
  return ctx.cfg.has(specific) ? specific : "detector." + name;
}

roi::DetectorConfig detector_config(Context& ctx, RegionKind kind) {
  roi::DetectorConfig c;
  c.kind = kind;
  c.input_size = positive_int(ctx, detector_key(ctx, kind, "input_size"), kind == RegionKind::kFace ? 512 : 128);
  if (c.input_size % roi::kCoarseStride != 0) {
    ctx.cfg.add_violation(detector_key(ctx, kind, "input_size") + ": must be a multiple of 32");
  }
  c.width = positive_int(ctx, detector_key(ctx, kind, "width"), c.width);
  c.epochs = positive_int(ctx, detector_key(ctx, kind, "epochs"), c.epochs);
  c.batch_size = positive_int(ctx, detector_key(ctx, kind, "batch_size"), c.batch_size);
  c.learning_rate = positive_double(ctx, detector_key(ctx, kind, "learning_rate"), c.learning_rate);
  c.momentum = ctx.cfg.get_double(detector_key(ctx, kind, "momentum"), c.momentum);
  c.weight_decay = ctx.cfg.get_double(detector_key(ctx, kind, "weight_decay"), c.weight_decay);
  c.confidence_threshold = ctx.cfg.get_double(detector_key(ctx, kind, "confidence_threshold"), c.confidence_threshold);
  c.nms_threshold = ctx.cfg.get_double(detector_key(ctx, kind, "nms_threshold"), c.nms_threshold);
  c.flip_augment = ctx.cfg.get_bool(detector_key(ctx, kind, "flip_augment"), c.flip_augment);
  c.color_augment = ctx.cfg.get_bool(detector_key(ctx, kind, "color_augment"), c.color_augment);
  return c;
}

cls::ClassifierConfig classifier_template(Context& ctx) {
  cls::ClassifierConfig c;
  c.base_width = positive_int(ctx, "classifier.base_width", c.base_width);
  c.epochs = positive_int(ctx, "classifier.epochs", c.epochs);
  c.batch_size = positive_int(ctx, "classifier.batch_size", c.batch_size);
  c.learning_rate = positive_double(ctx, "classifier.learning_rate", c.learning_rate);
  c.momentum = ctx.cfg.get_double("classifier.momentum", c.momentum);
  c.weight_decay = ctx.cfg.get_double("classifier.weight_decay", c.weight_decay);
  c.patience = positive_int(ctx, "classifier.patience", c.patience);
  c.flip_augment = ctx.cfg.get_bool("classifier.flip_augment", c.flip_augment);
  c.threshold = ctx.cfg.get_double("classifier.threshold", c.threshold);
  if (!(c.threshold > 0 && c.threshold < 1)) ctx.cfg.add_violation("classifier.threshold: must lie in (0, 1)");
  return c;
}

std::vector<cls::Family> family_list(Context& ctx, const std::string& key) {
  std::vector<cls::Family> out;
  for (const auto& s : ctx.cfg.get_string_list(key, {"drml", "alexnet"})) {
    if (auto f = cls::parse_family(s)) {
      out.push_back(*f);
    } else {
      ctx.cfg.add_violation(key + ": unknown family '" + s + "' (expected drml or alexnet)");
    }
  }
  return out;
}

std::vector<cls::Level> level_list(Context& ctx, const std::string& key) {
  std::vector<cls::Level> out;
  for (const auto& s : ctx.cfg.get_string_list(key, {"frame", "face", "region"})) {
    if (auto l = cls::parse_level(s)) {
      out.push_back(*l);
    } else {
      ctx.cfg.add_violation(key + ": unknown level '" + s + "' (expected frame, face or region)");
    }
  }
  return out;
}

std::vector<int> fold_list(Context& ctx, const std::string& key) {
  std::vector<int> out;
  for (auto v : ctx.cfg.get_int_list(key, {})) {
    if (v < 0 || v >= data::kSubjectCount) {
      ctx.cfg.add_violation(key + ": fold " + std::to_string(v) + " outside 0..7");
    } else {
      out.push_back(static_cast<int>(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------- data input

/// Where samples (and optionally ground-truth boxes) come from.
struct DataSource {
  fs::path corpus;  // synth-gen output directory
  fs::path frames;  // frame cache index
  fs::path boxes;   // box annotations
};

fs::path frame_index_path(const fs::path& p) { return fs::is_directory(p) ? p / "index.jsonl" : p; }

DataSource data_source(Context& ctx, bool need_boxes) {
  DataSource src;
  if (ctx.cfg.has("data.corpus")) {
    src.corpus = path_value(ctx, "data.corpus", true);
    return src;
  }
  if (!ctx.cfg.has("data.frames")) {
    ctx.cfg.add_violation("data.corpus or data.frames: one of them is required");
    return src;
  }
  src.frames = path_value(ctx, "data.frames", true);
  if (need_boxes) {
    src.boxes = path_value(ctx, "data.boxes", true);
  } else if (ctx.cfg.has("data.boxes")) {
    src.boxes = path_value(ctx, "data.boxes", false);
  }
  return src;
}

std::vector<roi::AnnotatedImage> annotated_images(const std::vector<BoxAnnotation>& rows) {
  std::map<std::string, roi::AnnotatedImage> by_image;
  for (const auto& r : rows) {
    auto& a = by_image[r.image];
    if (a.image.empty()) {
      a.image = cv::imread(r.image, cv::IMREAD_COLOR);
      if (a.image.empty()) throw Error("cannot read image '" + r.image + "'");
    }
    if (!r.subject_id.empty()) a.subject_id = r.subject_id;
    switch (r.kind) {
      case RegionKind::kFace: a.face = r.box; break;
      case RegionKind::kEye: a.eye = r.box; break;
      case RegionKind::kLowerFace: a.lower_face = r.box; break;
    }
  }
  std::vector<roi::AnnotatedImage> out;
  for (auto& [path, a] : by_image) {
    if (a.subject_id.empty()) throw ParseError("box annotations for '" + path + "' carry no subject_id");
    out.push_back(std::move(a));
  }
  return out;
}

eval::ExperimentData load_data(const DataSource& src) {
  eval::ExperimentData data;
  if (!src.corpus.empty()) {
    const synth::Corpus corpus = synth::read_corpus(src.corpus);
    for (const auto& f : corpus.frames) {
      data.samples.push_back({f.clip_id, 0, f.image, f.label, f.subject_id});
      data.detector_images.push_back({f.image, f.subject_id, f.face, f.eye, f.lower_face});
    }
  } else {
    data.samples = data::read_frame_cache(frame_index_path(src.frames));
    if (!src.boxes.empty()) data.detector_images = annotated_images(load_box_annotations(src.boxes));
  }
  for (const auto& s : data.samples) {
    if (std::find(data.subjects.begin(), data.subjects.end(), s.subject_id) == data.subjects.end()) {
      data.subjects.push_back(s.subject_id);
    }
  }
  if (data.subjects.size() != static_cast<std::size_t>(data::kSubjectCount)) {
    throw InvalidArgument("expected samples from exactly 8 subjects, found " + std::to_string(data.subjects.size()));
  }
  return data;
}

/// Loads face.eqck and whichever region models exist in `dir`.
roi::DetectorSuite load_suite(const fs::path& dir) {
  roi::DetectorSuite suite;
  if (!fs::exists(dir / "face.eqck")) throw InvalidArgument("no face.eqck in '" + dir.string() + "'");
  suite.face = roi::DetectorModel::load(dir / "face.eqck");
  if (fs::exists(dir / "eye.eqck")) suite.eye = roi::DetectorModel::load(dir / "eye.eqck");
  if (fs::exists(dir / "lower_face.eqck")) suite.lower_face = roi::DetectorModel::load(dir / "lower_face.eqck");
  return suite;
}

json box_json(const BoundingBox& b) { return {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}}; }

// --------------------------------------------------------------- commands

void cmd_synth_gen(Context& ctx) {
  synth::SynthSpec spec;
  spec.image_width = spec.image_height = positive_int(ctx, "synth.image_size", spec.image_width);
  spec.face_min_fraction = ctx.cfg.get_double("synth.face_min_fraction", spec.face_min_fraction);
  spec.face_max_fraction = ctx.cfg.get_double("synth.face_max_fraction", spec.face_max_fraction);
  spec.glyph_contrast = ctx.cfg.get_double("synth.contrast", spec.glyph_contrast);
  if (spec.glyph_contrast < 0 || spec.glyph_contrast > 1) ctx.cfg.add_violation("synth.contrast: must lie in [0, 1]");
  spec.noise_sigma = ctx.cfg.get_double("synth.noise_sigma", spec.noise_sigma);
  if (spec.noise_sigma < 0) ctx.cfg.add_violation("synth.noise_sigma: must be non-negative");
  spec.render_glyphs = ctx.cfg.get_bool("synth.render_glyphs", true);
  spec.style_seed = static_cast<std::uint64_t>(ctx.cfg.get_int("synth.style_seed", 0));
  spec.subject_prefix = ctx.cfg.get_string("synth.subject_prefix", spec.subject_prefix);
  const auto aus = au_list(ctx, "synth.aus", in_scope_names());
  const int n = positive_int(ctx, "synth.n_per_class", 50);
  ctx.cfg.check();
  guard(ctx, {ctx.out / "manifest.jsonl", ctx.out / "frames"});

  ctx.log("generating " + std::to_string(2 * n * static_cast<int>(aus.size())) + " frames");
  const synth::Corpus corpus = synth::generate_corpus(spec, aus, n, ctx.stage_seed("synth-gen"));
  synth::write_corpus(ctx.out, corpus);
  write_run_record(ctx);
  *ctx.out_stream << "wrote " << corpus.frames.size() << " frames to " << ctx.out.string() << '\n';
}

void cmd_ingest(Context& ctx) {
  const fs::path manifest_path = path_value(ctx, "data.manifest", true);
  const int min_count = static_cast<int>(ctx.cfg.get_int("data.min_count", 200));
  std::vector<AuCode> exclude;
  for (const auto& s : ctx.cfg.get_string_list("data.exclude", {})) {
    if (auto au = AuCode::parse(s)) {
      exclude.push_back(*au);
    } else {
      ctx.cfg.add_violation("data.exclude: unknown AU code '" + s + "'");
    }
  }
  if (!ctx.cfg.has("data.exclude")) exclude = default_excluded_codes();
  ctx.cfg.check();
  guard(ctx, {ctx.out / "manifest.jsonl", ctx.out / "ingest.json"});

  std::vector<std::string> warnings;
  const auto manifest = data::load_manifest(manifest_path, &warnings);
  for (const auto& w : warnings) ctx.log("warning: " + w);
  const auto counts = data::class_counts(manifest);
  const auto selected = data::select_classes(counts, min_count, exclude);

  json summary;
  summary["clips"] = manifest.size();
  summary["subjects"] = data::subjects_in(manifest);
  summary["class_counts"] = counts;
  summary["min_count"] = min_count;
  summary["selected"] = json::array();
  for (const auto& c : selected) summary["selected"].push_back(c.str());
  summary["warnings"] = warnings;
  fs::create_directories(ctx.out);
  data::write_manifest(ctx.out / "manifest.jsonl", manifest);
  write_text(ctx.out / "ingest.json", summary.dump(2) + "\n");
  write_run_record(ctx);
  *ctx.out_stream << manifest.size() << " clips; selected:";
  for (const auto& c : selected) *ctx.out_stream << ' ' << c.str();
  *ctx.out_stream << '\n';
}

void cmd_sample_frames(Context& ctx) {
  const fs::path manifest_path = path_value(ctx, "data.manifest", true);
  ctx.cfg.check();
  guard(ctx, {ctx.out / "frames", ctx.out / "skipped.jsonl"});

  const auto manifest = data::load_manifest(manifest_path);
  std::vector<data::SkipEntry> skipped;
  const data::OpenCvVideoReader reader;
  const auto samples = data::sample_frames(manifest, reader, ctx.stage_seed("sample-frames"), &skipped, ctx.workers);
  for (const auto& s : skipped) ctx.log("skipped " + s.clip_id + ": " + s.reason);
  data::write_frame_cache(ctx.out / "frames", samples);
  data::write_skip_report(ctx.out / "skipped.jsonl", skipped);
  write_run_record(ctx);
  *ctx.out_stream << samples.size() << " frames sampled, " << skipped.size() << " clips skipped\n";
}

void cmd_train_detector(Context& ctx) {
  const fs::path boxes = path_value(ctx, "data.boxes", !ctx.cfg.has("data.corpus"));
  const fs::path corpus = ctx.cfg.has("data.corpus") ? path_value(ctx, "data.corpus", true) : fs::path{};
  const std::string kind_name = ctx.cfg.get_string("detector.kind", "face");
  const auto kind = parse_region_kind(kind_name);
  if (!kind) ctx.cfg.add_violation("detector.kind: expected face, eye or lower_face, got '" + kind_name + "'");
  roi::DetectorConfig config = detector_config(ctx, kind.value_or(RegionKind::kFace));
  const auto subjects = ctx.cfg.get_string_list("detector.subjects", {});
  const double holdout = ctx.cfg.get_double("detector.holdout", 0.0);
  if (holdout < 0 || holdout >= 1) ctx.cfg.add_violation("detector.holdout: must lie in [0, 1)");
  ctx.cfg.check();
  const std::string name(to_string(*kind));
  guard(ctx, {ctx.out / (name + ".eqck")});

  std::vector<roi::AnnotatedImage> images;
  if (!corpus.empty()) {
    for (const auto& f : synth::read_corpus(corpus).frames) images.push_back({f.image, f.subject_id, f.face, f.eye, f.lower_face});
  } else {
    images = annotated_images(load_box_annotations(boxes));
  }
  const std::set<std::string> allowed(subjects.begin(), subjects.end());
  std::vector<roi::DetectorSample> samples;
  std::set<std::string> used_subjects;
  for (const auto& a : images) {
    if (!allowed.empty() && !allowed.contains(a.subject_id)) continue;
    if (!a.face) continue;
    if (*kind == RegionKind::kFace) {
      samples.push_back({a.image, *a.face});
    } else {
      const auto& region = *kind == RegionKind::kEye ? a.eye : a.lower_face;
      if (!region) continue;
      samples.push_back(roi::region_training_sample(a.image, *a.face, *region));
    }
    used_subjects.insert(a.subject_id);
  }
  if (samples.empty()) throw InvalidArgument("no training images carry a " + name + " box");

  Rng rng(ctx.stage_seed("train-detector/holdout"));
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n_hold = static_cast<std::size_t>(holdout * static_cast<double>(samples.size()));
  std::vector<roi::DetectorSample> held(samples.end() - static_cast<std::ptrdiff_t>(n_hold), samples.end());
  samples.resize(samples.size() - n_hold);

  config.seed = ctx.stage_seed("train-detector/" + name);
  ctx.log("training " + name + " detector on " + std::to_string(samples.size()) + " images");
  roi::DetectorTrainingLog log;
  roi::DetectorModel model = roi::train_detector(samples, config, &log);
  model.set_training_subjects(used_subjects);
  fs::create_directories(ctx.out);
  model.save(ctx.out / (name + ".eqck"));

  std::ostringstream loss;
  loss.precision(17);
  loss << "epoch,loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) loss << e + 1 << ',' << log.epoch_loss[e] << '\n';
  write_text(ctx.out / (name + "_loss.csv"), loss.str());
  json metrics{{"kind", name}, {"n_train", samples.size()}, {"n_holdout", held.size()},
               {"train_iou", roi::mean_top_iou(model, samples)}};
  if (!held.empty()) metrics["holdout_iou"] = roi::mean_top_iou(model, held);
  write_text(ctx.out / (name + "_metrics.json"), metrics.dump(2) + "\n");
  write_run_record(ctx);
  *ctx.out_stream << metrics.dump() << '\n';
}

void cmd_cascade_crop(Context& ctx) {
  const fs::path frames = path_value(ctx, "data.frames", !ctx.cfg.has("data.corpus"));
  const fs::path corpus = ctx.cfg.has("data.corpus") ? path_value(ctx, "data.corpus", true) : fs::path{};
  const std::string kind_name = ctx.cfg.get_string("detector.kind", "face");
  const auto kind = parse_region_kind(kind_name);
  if (!kind) ctx.cfg.add_violation("detector.kind: expected face, eye or lower_face, got '" + kind_name + "'");
  const fs::path dir = ctx.cfg.has("detector.dir") ? path_value(ctx, "detector.dir", true) : fs::path{};
  fs::path face_path = ctx.cfg.has("detector.face_model") ? path_value(ctx, "detector.face_model", true) : fs::path{};
  fs::path region_path =
      ctx.cfg.has("detector.region_model") ? path_value(ctx, "detector.region_model", true) : fs::path{};
  if (face_path.empty() && !dir.empty()) face_path = dir / "face.eqck";
  if (kind && *kind != RegionKind::kFace && region_path.empty() && !dir.empty()) {
    region_path = dir / (std::string(to_string(*kind)) + ".eqck");
  }
  if (face_path.empty()) ctx.cfg.add_violation("detector.face_model: required (or detector.dir)");
  if (kind && *kind != RegionKind::kFace && region_path.empty()) {
    ctx.cfg.add_violation("detector.region_model: required for " + kind_name + " crops (or detector.dir)");
  }
  ctx.cfg.check();
  guard(ctx, {ctx.out / "crops"});

  std::vector<data::FrameSample> samples;
  if (!corpus.empty()) {
    for (const auto& f : synth::read_corpus(corpus).frames) samples.push_back({f.clip_id, 0, f.image, f.label, f.subject_id});
  } else {
    samples = data::read_frame_cache(frame_index_path(frames));
  }
  const auto face = roi::DetectorModel::load(face_path);
  std::optional<roi::DetectorModel> region;
  if (*kind != RegionKind::kFace) region = roi::DetectorModel::load(region_path);

  const fs::path crop_dir = ctx.out / "crops";
  fs::create_directories(crop_dir);
  std::vector<std::optional<roi::RegionCrop>> crops(samples.size());
  parallel_for(samples.size(), ctx.workers, [&](std::size_t i) {
    try {
      crops[i] = roi::cascade_detect(face, region ? &*region : nullptr, samples[i].image, *kind);
    } catch (const roi::CascadeMiss&) {
    }
  });
  std::ostringstream index;
  std::ostringstream misses;
  int n_miss = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string name = s.clip_id + "_" + std::to_string(s.frame_index) + ".png";
    json row{{"clip_id", s.clip_id}, {"frame_index", s.frame_index}, {"subject_id", s.subject_id}, {"label", s.label.str()}};
    if (!crops[i]) {
      ++n_miss;
      misses << row.dump() << '\n';
      continue;
    }
    if (!cv::imwrite((crop_dir / name).string(), crops[i]->image)) throw Error("cannot write crop '" + name + "'");
    row["image"] = name;
    row["box"] = box_json(crops[i]->source_box);
    row["confidence"] = crops[i]->confidence;
    index << row.dump() << '\n';
  }
  write_text(crop_dir / "crops.jsonl", index.str());
  write_text(crop_dir / "misses.jsonl", misses.str());
  write_run_record(ctx);
  *ctx.out_stream << samples.size() - static_cast<std::size_t>(n_miss) << " crops, " << n_miss << " cascade misses\n";
}

void cmd_train_au(Context& ctx) {
  const DataSource src = data_source(ctx, false);
  ctx.cfg.require("classifier.au");
  const auto au = ctx.cfg.has("classifier.au") ? au_value(ctx, "classifier.au", ctx.cfg.get_string("classifier.au"))
                                               : std::nullopt;
  const auto family = cls::parse_family(ctx.cfg.get_string("classifier.family", "drml"));
  if (!family) ctx.cfg.add_violation("classifier.family: expected drml or alexnet");
  const auto level = cls::parse_level(ctx.cfg.get_string("classifier.level", "region"));
  if (!level) ctx.cfg.add_violation("classifier.level: expected frame, face or region");
  const auto fold = ctx.cfg.get_int("classifier.fold", 0);
  if (fold < 0 || fold >= data::kSubjectCount) ctx.cfg.add_violation("classifier.fold: must lie in 0..7");
  const cls::ClassifierConfig tmpl = classifier_template(ctx);
  fs::path det_dir;
  if (level && *level != cls::Level::kFrame) det_dir = path_value(ctx, "detector.dir", true);
  ctx.cfg.check();

  const eval::ExperimentData data = load_data(src);
  std::optional<roi::DetectorSuite> suite;
  if (!det_dir.empty()) suite = load_suite(det_dir);
  const auto folds = data::make_subject_folds(data.subjects);
  eval::FoldTask task;
  task.au = *au;
  task.family = *family;
  task.level = *level;
  task.classifier = tmpl;
  task.seed = ctx.seed;
  task.workers = ctx.workers;
  eval::FoldResult probe;
  probe.au = au->str();
  probe.family = std::string(cls::to_string(*family));
  probe.level = std::string(cls::to_string(*level));
  probe.fold_index = static_cast<int>(fold);
  const fs::path dir = eval::fold_directory(ctx.out, probe);
  guard(ctx, {dir});

  ctx.log("training " + probe.au + " " + probe.family + " " + probe.level + " fold " + std::to_string(fold));
  const auto crop = eval::make_crop_fn(*level, *au, suite ? &*suite : nullptr);
  const eval::FoldArtifacts art =
      eval::run_fold(folds[static_cast<std::size_t>(fold)], task, data.samples, crop, suite ? &*suite : nullptr);
  eval::write_fold_artifacts(dir, art);
  write_run_record(ctx);
  *ctx.out_stream << eval::fold_result_json(art.result) << '\n';
}

void cmd_evaluate(Context& ctx) {
  eval::ExperimentConfig config;
  config.levels = level_list(ctx, "experiment.levels");
  bool cascade = false;
  for (auto l : config.levels) cascade |= l != cls::Level::kFrame;
  const bool shared = ctx.cfg.has("detector.dir");
  const DataSource src = data_source(ctx, cascade && !shared);
  config.aus = au_list(ctx, "experiment.aus", {});
  ctx.cfg.require("experiment.aus");
  config.families = family_list(ctx, "experiment.families");
  config.folds = fold_list(ctx, "experiment.folds");
  config.classifier = classifier_template(ctx);
  config.detectors.face = detector_config(ctx, RegionKind::kFace);
  config.detectors.eye = detector_config(ctx, RegionKind::kEye);
  config.detectors.lower_face = detector_config(ctx, RegionKind::kLowerFace);
  const fs::path det_dir = shared ? path_value(ctx, "detector.dir", true) : fs::path{};
  config.seed = ctx.seed;
  config.workers = ctx.workers;
  ctx.cfg.check();
  std::vector<fs::path> outputs{ctx.out / "report.md", ctx.out / "report.csv", ctx.out / "detectors"};
  for (const auto& au : config.aus) outputs.push_back(ctx.out / au.str());
  guard(ctx, outputs);

  const eval::ExperimentData data = load_data(src);
  std::optional<roi::DetectorSuite> suite;
  if (shared) suite = load_suite(det_dir);
  fs::create_directories(ctx.out);
  const auto report = eval::run_experiment(config, data, ctx.out, suite ? &*suite : nullptr,
                                           [&](const std::string& msg) { ctx.log(msg); });
  write_run_record(ctx);
  *ctx.out_stream << eval::render_markdown(report);
}

void cmd_saliency(Context& ctx) {
  const fs::path checkpoint = path_value(ctx, "classifier.checkpoint", true);
  const fs::path input = path_value(ctx, "saliency.input", true);
  const std::string layer = ctx.cfg.get_string("saliency.layer", "");
  const int limit = positive_int(ctx, "saliency.limit", 16);
  ctx.cfg.check();
  guard(ctx, {ctx.out / "saliency"});

  std::vector<fs::path> images;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension().string();
      if (ext == ".png" || ext == ".jpg" || ext == ".bmp") images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());
  } else {
    images.push_back(input);
  }
  if (images.empty()) throw InvalidArgument("no images in '" + input.string() + "'");
  if (images.size() > static_cast<std::size_t>(limit)) images.resize(static_cast<std::size_t>(limit));

  const auto clf = cls::BinaryClassifier::load(checkpoint);
  const int side = cls::network_side(clf.config().level);
  // Files are named <au>_<family>_<level>_<sample>.png. The AU comes from
  // classifier.au or from a results/<au>/<family>/<level>/fold<i>/ layout.
  std::string au_name = ctx.cfg.get_string("classifier.au", "");
  if (au_name.empty()) {
    const fs::path up = checkpoint.parent_path().parent_path().parent_path().parent_path().filename();
    au_name = AuCode::parse(up.string()) ? up.string() : "unknown";
  }
  const std::string prefix = au_name + "_" + std::string(cls::to_string(clf.config().family)) + "_" +
                             std::string(cls::to_string(clf.config().level)) + "_";
  const fs::path dir = ctx.out / "saliency";
  fs::create_directories(dir);
  std::vector<std::vector<cv::Mat>> panels;
  std::vector<std::string> labels;
  std::ostringstream index;
  for (const auto& path : images) {
    cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (image.empty()) throw Error("cannot read image '" + path.string() + "'");
    const cv::Mat crop = square_view(image, side);
    const auto map = saliency::grad_cam(clf, crop, layer);
    const cv::Mat over = saliency::overlay(map, crop);
    const std::string stem = path.stem().string();
    if (!cv::imwrite((dir / (prefix + stem + ".png")).string(), over)) throw Error("cannot write overlay for '" + stem + "'");
    double max_value = 0;
    cv::minMaxLoc(map.heatmap, nullptr, &max_value);
    const auto pred = clf.predict(crop);
    index << json{{"image", path.filename().string()}, {"probability", pred.probability}, {"positive", pred.decision},
                  {"target_layer", map.target_layer}, {"heat_max", max_value}}
                 .dump()
          << '\n';
    panels.push_back({crop, over});
    labels.push_back(stem);
  }
  saliency::emit_grid(dir / "grid.png", panels, labels, {"input", "grad-cam"});
  write_text(dir / "saliency.jsonl", index.str());
  write_run_record(ctx);
  *ctx.out_stream << images.size() << " saliency maps written to " << dir.string() << '\n';
}

void cmd_report(Context& ctx) {
  const fs::path results = ctx.cfg.has("report.results") ? path_value(ctx, "report.results", true) : ctx.out;
  ctx.cfg.check();
  if (!fs::is_directory(results)) throw CliError("empty-results", "'" + results.string() + "' is not a directory");
  const auto folds = eval::collect_fold_results(results);
  if (folds.empty()) throw CliError("empty-results", "no fold results (metrics.json) under '" + results.string() + "'");
  const auto report = eval::build_report(folds);
  const std::string md = eval::render_markdown(report);
  const std::string csv = eval::render_csv(report);
  // Regenerating identical bytes is not a collision.
  std::vector<fs::path> changed;
  if (fs::exists(ctx.out / "report.md") && read_text(ctx.out / "report.md") != md) changed.push_back(ctx.out / "report.md");
  if (fs::exists(ctx.out / "report.csv") && read_text(ctx.out / "report.csv") != csv) {
    changed.push_back(ctx.out / "report.csv");
  }
  guard(ctx, changed);
  write_text(ctx.out / "report.md", md);
  write_text(ctx.out / "report.csv", csv);
  *ctx.out_stream << md;
}

// ------------------------------------------------------------------ wiring

struct KeyOption {
  std::string key;
  bool is_path = false;
  std::string value;
  CLI::Option* option = nullptr;
};

struct Command {
  std::string name;
  bool stochastic = false;
  std::function<void(Context&)> run;
  CLI::App* app = nullptr;
  std::deque<KeyOption> options;
};

struct Globals {
  std::string config;
  std::string seed;
  std::string out;
  std::string workers;
  bool force = false;
  std::vector<std::string> sets;
};

void add_globals(CLI::App* app, Globals& g) {
  app->add_option("--config", g.config, "Experiment config file (TOML subset)");
  app->add_option("--seed", g.seed, "Top-level seed (required by stochastic commands)");
  app->add_option("--out", g.out, "Output directory (default: $EQUICASCADE_OUT)");
  app->add_option("--workers", g.workers, "Worker threads (0 = CPU count)");
  app->add_flag("--force", g.force, "Overwrite existing outputs");
  app->add_option("--set", g.sets, "Override a config key: --set section.key=value")->take_all();
}

void add_key(Command& cmd, const std::string& flag, const std::string& key, const std::string& help,
             bool is_path = false) {
  cmd.options.push_back({key, is_path, "", nullptr});
  KeyOption& k = cmd.options.back();
  k.option = cmd.app->add_option(flag, k.value, help + " [" + key + "]");
}

std::string usage_text(const CLI::App& app) {
  std::string text = app.help();
  return text;
}

int report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << "equicascade: error: " << kind << ": " << message << '\n';
  return kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"equicascade: cascaded region-of-interest action unit pipeline", "equicascade"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);
  Globals globals;

  std::deque<Command> commands;
  auto add_command = [&](const std::string& name, const std::string& help, bool stochastic,
                         std::function<void(Context&)> fn) -> Command& {
    commands.push_back({name, stochastic, std::move(fn), app.add_subcommand(name, help), {}});
    add_globals(commands.back().app, globals);
    return commands.back();
  };

  {
    auto& c = add_command("synth-gen", "Generate a synthetic labelled corpus", true, cmd_synth_gen);
    add_key(c, "--aus", "synth.aus", "Comma-separated AU codes");
    add_key(c, "--n-per-class", "synth.n_per_class", "Frames per class and AU");
    add_key(c, "--contrast", "synth.contrast", "Glyph contrast in [0, 1]");
    add_key(c, "--glyphs", "synth.render_glyphs", "true or false; false renders no AU glyphs");
  }
  {
    auto& c = add_command("ingest", "Validate a manifest and select classes", false, cmd_ingest);
    add_key(c, "--manifest", "data.manifest", "Manifest (JSONL or CSV)", true);
    add_key(c, "--min-count", "data.min_count", "Keep codes with more clips than this");
  }
  {
    auto& c = add_command("sample-frames", "Draw one frame per clip into a frame cache", true, cmd_sample_frames);
    add_key(c, "--manifest", "data.manifest", "Manifest (JSONL or CSV)", true);
  }
  {
    auto& c = add_command("train-detector", "Train a face, eye or lower-face detector", true, cmd_train_detector);
    add_key(c, "--boxes", "data.boxes", "Box annotation file (JSONL)", true);
    add_key(c, "--corpus", "data.corpus", "synth-gen output directory", true);
    add_key(c, "--kind", "detector.kind", "face, eye or lower_face");
    add_key(c, "--epochs", "detector.epochs", "Training epochs");
  }
  {
    auto& c = add_command("cascade-crop", "Crop faces or regions through the detector cascade", false, cmd_cascade_crop);
    add_key(c, "--frames", "data.frames", "Frame cache directory or index.jsonl", true);
    add_key(c, "--corpus", "data.corpus", "synth-gen output directory", true);
    add_key(c, "--detectors", "detector.dir", "Directory with face.eqck, eye.eqck, lower_face.eqck", true);
    add_key(c, "--kind", "detector.kind", "face, eye or lower_face");
  }
  {
    auto& c = add_command("train-au", "Train one AU classifier on one fold", true, cmd_train_au);
    add_key(c, "--frames", "data.frames", "Frame cache directory or index.jsonl", true);
    add_key(c, "--corpus", "data.corpus", "synth-gen output directory", true);
    add_key(c, "--detectors", "detector.dir", "Directory with trained detectors", true);
    add_key(c, "--au", "classifier.au", "Target AU code");
    add_key(c, "--family", "classifier.family", "drml or alexnet");
    add_key(c, "--level", "classifier.level", "frame, face or region");
    add_key(c, "--fold", "classifier.fold", "Fold index 0..7");
  }
  {
    auto& c = add_command("evaluate", "Run eight-fold cross-validation and write the report", true, cmd_evaluate);
    add_key(c, "--corpus", "data.corpus", "synth-gen output directory", true);
    add_key(c, "--frames", "data.frames", "Frame cache directory or index.jsonl", true);
    add_key(c, "--boxes", "data.boxes", "Box annotations for per-fold detector training", true);
    add_key(c, "--detectors", "detector.dir", "Shared pre-trained detectors", true);
  }
  {
    auto& c = add_command("saliency", "Grad-CAM overlays for a trained classifier", false, cmd_saliency);
    add_key(c, "--checkpoint", "classifier.checkpoint", "Classifier checkpoint (.eqck)", true);
    add_key(c, "--input", "saliency.input", "Crop image or directory of crops", true);
    add_key(c, "--layer", "saliency.layer", "Target layer name");
    add_key(c, "--au", "classifier.au", "AU code used in output file names");
  }
  {
    auto& c = add_command("report", "Aggregate fold results into Markdown and CSV", false, cmd_report);
    add_key(c, "--results", "report.results", "Results directory (default: --out)", true);
  }

  if (args.size() > 1 && !args[1].empty() && args[1][0] != '-') {
    const bool known = std::any_of(commands.begin(), commands.end(), [&](const Command& c) { return c.name == args[1]; });
    if (!known) {
      err << usage_text(app) << "equicascade: error: usage: unknown subcommand '" << args[1] << "'\n";
      return kExitUsage;
    }
  }
  std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const CLI::App* shown = &app;
    for (const auto& c : commands) {
      if (c.app->parsed()) shown = c.app;
    }
    err << usage_text(*shown);
    err << "equicascade: error: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  Command* cmd = nullptr;
  for (auto& c : commands) {
    if (c.app->parsed()) cmd = &c;
  }
  if (!cmd) {
    err << usage_text(app) << "equicascade: error: usage: a subcommand is required\n";
    return kExitUsage;
  }

  Context ctx;
  ctx.command = cmd->name;
  ctx.out_stream = &out;
  ctx.err_stream = &err;
  try {
    if (!globals.config.empty()) ctx.cfg = RunConfig::load(globals.config);
    for (const auto& s : globals.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) {
        ctx.cfg.add_violation("--set " + s + ": expected key=value");
        continue;
      }
      ctx.cfg.set_from_string(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& k : cmd->options) {
      if (k.option->count() == 0) continue;
      const std::string v = k.is_path ? fs::absolute(k.value).string() : k.value;
      if (k.is_path) {
        ctx.cfg.set(k.key, ConfigValue{ConfigValue::Scalar{v}});
      } else {
        ctx.cfg.set_from_string(k.key, v);
      }
    }
    if (!globals.seed.empty()) ctx.cfg.set_from_string("seed", globals.seed);
    if (!globals.workers.empty()) ctx.cfg.set_from_string("workers", globals.workers);
    ctx.force = globals.force;

    if (!globals.out.empty()) {
      ctx.out = fs::absolute(globals.out);
    } else if (ctx.cfg.has("out")) {
      ctx.out = ctx.cfg.resolve(ctx.cfg.get_string("out"));
    } else if (const char* env = std::getenv("EQUICASCADE_OUT"); env && *env) {
      ctx.out = fs::path(env);
    } else {
      ctx.cfg.add_violation("out: no output directory (use --out, 'out' in the config or EQUICASCADE_OUT)");
    }
    if (cmd->stochastic) ctx.cfg.require("seed");
    const auto seed = ctx.cfg.get_int("seed", 0);
    if (seed < 0) ctx.cfg.add_violation("seed: must be non-negative");
    ctx.seed = static_cast<std::uint64_t>(seed);
    const auto workers = ctx.cfg.get_int("workers", 0);
    if (workers < 0) ctx.cfg.add_violation("workers: must be non-negative");
    ctx.workers = workers > 0 ? static_cast<int>(workers) : default_worker_count();

    cmd->run(ctx);
    return kExitOk;
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) report_error(err, "config", v);
    return kExitFailure;
  } catch (const CliError& e) {
    return report_error(err, e.kind(), e.what());
  } catch (const ParseError& e) {
    return report_error(err, "parse", e.what());
  } catch (const LeakageError& e) {
    return report_error(err, "leakage", e.what());
  } catch (const InvalidArgument& e) {
    return report_error(err, "invalid-argument", e.what());
  } catch (const TrainingError& e) {
    return report_error(err, "training", e.what());
  } catch (const Error& e) {
    return report_error(err, "runtime", e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal", e.what());
  }
}

}  // namespace equicascade::cli
