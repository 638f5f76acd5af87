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

#include "equicascade/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "equicascade/error.hpp"
#include "equicascade/image_ops.hpp"
#include "equicascade/nn/layers.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::roi {

using nn::Mode;
using nn::Tensor;

double shape_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  const double uni = w1 * h1 + w2 * h2 - inter;
  return uni > 0 ? inter / uni : 0.0;
}

AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& shapes, int iterations) {
  if (shapes.empty()) throw InvalidArgument("kmeans_anchors: no box shapes");
  std::vector<std::pair<double, double>> sorted = shapes;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first * a.second < b.first * b.second; });
  constexpr int k = 6;
  std::array<std::pair<double, double>, k> centers;
  for (int j = 0; j < k; ++j) {
    const auto idx = static_cast<std::size_t>((j + 0.5) / k * static_cast<double>(sorted.size()));
    centers[static_cast<std::size_t>(j)] = sorted[std::min(idx, sorted.size() - 1)];
  }
  for (int it = 0; it < iterations; ++it) {
    std::array<double, k> sw{}, sh{};
    std::array<int, k> count{};
    for (const auto& [w, h] : sorted) {
      int best = 0;
      double best_iou = -1;
      for (int j = 0; j < k; ++j) {
        const auto& c = centers[static_cast<std::size_t>(j)];
        const double v = shape_iou(w, h, c.first, c.second);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      const auto b = static_cast<std::size_t>(best);
      sw[b] += w;
      sh[b] += h;
      ++count[b];
    }
    bool moved = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] == 0) continue;
      const std::pair<double, double> next{sw[j] / count[j], sh[j] / count[j]};
      if (next != centers[j]) moved = true;
      centers[j] = next;
    }
    if (!moved) break;
  }
  std::sort(centers.begin(), centers.end(),
            [](const auto& a, const auto& b) { return a.first * a.second < b.first * b.second; });
  AnchorSet out;
  for (std::size_t j = 0; j < k; ++j) out[j] = {centers[j].first, centers[j].second};
  return out;
}

// ------------------------------------------------------------ DetectorNet

namespace {

template <typename T>
void add_stage(nn::Sequential<T>& seq, const std::string& name, int in, int out, int stride, Rng& rng) {
  seq.add(name + "_conv", std::make_unique<nn::Conv2d<T>>(in, out, 3, stride, 1, false, rng));
  seq.add(name + "_bn", std::make_unique<nn::BatchNorm2d<T>>(out));
  seq.add(name + "_act", std::make_unique<nn::LeakyReLU<T>>(T(0.1)));
}

template <typename T>
void init_head(nn::Sequential<T>& head) {
  auto params = head.parameters();
  auto* weight = params[params.size() - 2];
  auto* bias = params[params.size() - 1];
  for (auto& v : weight->value.values()) v *= T(0.01);
  const T prior = static_cast<T>(std::log(0.01 / 0.99));
  for (int a = 0; a < kAnchorsPerScale; ++a) {
    bias->value[static_cast<std::size_t>(a * kOutputsPerAnchor + 4)] = prior;
  }
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < y.h(); ++r)
        for (int q = 0; q < y.w(); ++q) y.at(i, c, r, q) = x.at(i, c, r / 2, q / 2);
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& g) {
  Tensor<T> x(g.n(), g.c(), g.h() / 2, g.w() / 2);
  for (int i = 0; i < g.n(); ++i)
    for (int c = 0; c < g.c(); ++c)
      for (int r = 0; r < g.h(); ++r)
        for (int q = 0; q < g.w(); ++q) x.at(i, c, r / 2, q / 2) += g.at(i, c, r, q);
  return x;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw InvalidArgument("concat: incompatible " + a.shape_string() + " and " + b.shape_string());
  }
  Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), y.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), y.sample(i) + a.sample_size());
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, int first) {
  Tensor<T> a(y.n(), first, y.h(), y.w());
  Tensor<T> b(y.n(), y.c() - first, y.h(), y.w());
  for (int i = 0; i < y.n(); ++i) {
    std::copy(y.sample(i), y.sample(i) + a.sample_size(), a.sample(i));
    std::copy(y.sample(i) + a.sample_size(), y.sample(i) + y.sample_size(), b.sample(i));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  nn::require_same_shape(dst, src, "add_into");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
DetectorNet<T>::DetectorNet(int width, std::uint64_t seed) {
  if (width <= 0) throw InvalidArgument("DetectorNet: width must be positive");
  Rng rng(seed);
  std::array<int, 7> ch{};
  for (int s = 0; s < 7; ++s) ch[static_cast<std::size_t>(s)] = width * std::min(1 << s, 16);
  add_stage(stem_, "stage1", 3, ch[0], 2, rng);
  add_stage(stem_, "stage2", ch[0], ch[1], 2, rng);
  add_stage(stem_, "stage3", ch[1], ch[2], 2, rng);
  add_stage(stem_, "stage4", ch[2], ch[3], 2, rng);
  add_stage(deep_, "stage5", ch[3], ch[4], 2, rng);
  add_stage(deep_, "stage6", ch[4], ch[5], 1, rng);
  add_stage(deep_, "stage7", ch[5], ch[6], 1, rng);
  stem_channels_ = ch[3];
  bridge_channels_ = ch[3];
  const int outputs = kAnchorsPerScale * kOutputsPerAnchor;
  head_coarse_.add("coarse_out", std::make_unique<nn::Conv2d<T>>(ch[6], outputs, 1, 1, 0, true, rng));
  bridge_.add("bridge_conv", std::make_unique<nn::Conv2d<T>>(ch[6], bridge_channels_, 1, 1, 0, false, rng));
  bridge_.add("bridge_bn", std::make_unique<nn::BatchNorm2d<T>>(bridge_channels_));
  bridge_.add("bridge_act", std::make_unique<nn::LeakyReLU<T>>(T(0.1)));
  add_stage(head_fine_, "fine", bridge_channels_ + stem_channels_, 2 * stem_channels_, 1, rng);
  head_fine_.add("fine_out", std::make_unique<nn::Conv2d<T>>(2 * stem_channels_, outputs, 1, 1, 0, true, rng));
  init_head(head_coarse_);
  init_head(head_fine_);
}

template <typename T>
typename DetectorNet<T>::Output DetectorNet<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.h() % kCoarseStride != 0 || x.w() % kCoarseStride != 0) {
    throw InvalidArgument("DetectorNet: input side must be a multiple of 32, got " + x.shape_string());
  }
  const Tensor<T> s16 = stem_.forward(x, mode);
  const Tensor<T> s32 = deep_.forward(s16, mode);
  Output out;
  out.coarse = head_coarse_.forward(s32, mode);
  const Tensor<T> up = upsample2(bridge_.forward(s32, mode));
  out.fine = head_fine_.forward(concat_channels(up, s16), mode);
  return out;
}

template <typename T>
typename DetectorNet<T>::Output DetectorNet<T>::infer(const Tensor<T>& x) const {
  if (x.h() % kCoarseStride != 0 || x.w() % kCoarseStride != 0) {
    throw InvalidArgument("DetectorNet: input side must be a multiple of 32, got " + x.shape_string());
  }
  const Tensor<T> s16 = stem_.infer(x);
  const Tensor<T> s32 = deep_.infer(s16);
  Output out;
  out.coarse = head_coarse_.infer(s32);
  out.fine = head_fine_.infer(concat_channels(upsample2(bridge_.infer(s32)), s16));
  return out;
}

template <typename T>
void DetectorNet<T>::backward(const Output& grads) {
  auto [g_up, g_s16] = split_channels(head_fine_.backward(grads.fine), bridge_channels_);
  Tensor<T> g_s32 = head_coarse_.backward(grads.coarse);
  add_into(g_s32, bridge_.backward(upsample2_backward(g_up)));
  add_into(g_s16, deep_.backward(g_s32));
  stem_.backward(g_s16);
}

template <typename T>
std::vector<nn::Parameter<T>*> DetectorNet<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (auto* seq : {&stem_, &deep_, &head_coarse_, &bridge_, &head_fine_}) {
    for (auto* p : seq->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<nn::StateEntry<T>> DetectorNet<T>::state() {
  std::vector<nn::StateEntry<T>> out;
  for (auto* seq : {&stem_, &deep_, &head_coarse_, &bridge_, &head_fine_}) {
    for (auto e : seq->state()) out.push_back(e);
  }
  return out;
}

template <typename T>
void DetectorNet<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

// ------------------------------------------------------------------ loss

namespace {

template <typename T>
double bce(T z, double y) {
  const double zd = z;
  return std::max(zd, 0.0) - zd * y + std::log1p(std::exp(-std::abs(zd)));
}

enum class Role : std::uint8_t { kNegative, kPositive, kIgnore };

}  // namespace

template <typename T>
DetectorLoss<T> detector_loss(const typename DetectorNet<T>::Output& out, const std::vector<BoundingBox>& targets,
                              const AnchorSet& anchors, double box_weight, double noobj_weight) {
  const int n = out.coarse.n();
  if (static_cast<int>(targets.size()) != n || out.fine.n() != n) {
    throw InvalidArgument("detector_loss: one target per sample required");
  }
  DetectorLoss<T> result;
  result.grad.coarse = Tensor<T>::zeros_like(out.coarse);
  result.grad.fine = Tensor<T>::zeros_like(out.fine);
  double obj_loss = 0;
  double box_loss = 0;

  struct Scale {
    const Tensor<T>* pred;
    Tensor<T>* grad;
    int stride;
    int anchor_offset;
  };
  const std::array<Scale, 2> scales = {Scale{&out.fine, &result.grad.fine, kFineStride, 0},
                                       Scale{&out.coarse, &result.grad.coarse, kCoarseStride, kAnchorsPerScale}};

  for (int i = 0; i < n; ++i) {
    const BoundingBox& gt = targets[static_cast<std::size_t>(i)];
    if (!gt.valid()) throw InvalidArgument("detector_loss: degenerate target box");
    std::array<double, 6> anchor_iou{};
    for (std::size_t a = 0; a < 6; ++a) {
      anchor_iou[a] = shape_iou(gt.width(), gt.height(), anchors[a].w, anchors[a].h);
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(anchor_iou.begin(), anchor_iou.end()) - anchor_iou.begin());

    for (const Scale& sc : scales) {
      const int gh = sc.pred->h();
      const int gw = sc.pred->w();
      const double fx = gt.center_x() / sc.stride;
      const double fy = gt.center_y() / sc.stride;
      const int cx = std::clamp(static_cast<int>(std::floor(fx)), 0, gw - 1);
      const int cy = std::clamp(static_cast<int>(std::floor(fy)), 0, gh - 1);
      for (int a = 0; a < kAnchorsPerScale; ++a) {
        const auto ga = static_cast<std::size_t>(sc.anchor_offset + a);
        Role center_role = Role::kNegative;
        if (ga == best || anchor_iou[ga] > 0.5) {
          center_role = Role::kPositive;
        } else if (anchor_iou[ga] >= 0.4) {
          center_role = Role::kIgnore;
        }
        const int base = a * kOutputsPerAnchor;
        for (int y = 0; y < gh; ++y) {
          for (int x = 0; x < gw; ++x) {
            const Role role = (x == cx && y == cy) ? center_role : Role::kNegative;
            if (role == Role::kIgnore) continue;
            const T z = sc.pred->at(i, base + 4, y, x);
            if (role == Role::kNegative) {
              obj_loss += noobj_weight * bce(z, 0.0);
              sc.grad->at(i, base + 4, y, x) = static_cast<T>(noobj_weight * nn::sigmoid<double>(z));
              continue;
            }
            obj_loss += bce(z, 1.0);
            sc.grad->at(i, base + 4, y, x) = static_cast<T>(nn::sigmoid<double>(z) - 1.0);

            const std::array<double, 4> target = {fx - cx, fy - cy, std::log(gt.width() / anchors[ga].w),
                                                  std::log(gt.height() / anchors[ga].h)};
            for (int k = 0; k < 2; ++k) {
              const double s = nn::sigmoid<double>(sc.pred->at(i, base + k, y, x));
              const double d = s - target[static_cast<std::size_t>(k)];
              box_loss += box_weight * d * d;
              sc.grad->at(i, base + k, y, x) = static_cast<T>(box_weight * 2 * d * s * (1 - s));
            }
            for (int k = 2; k < 4; ++k) {
              const double d = static_cast<double>(sc.pred->at(i, base + k, y, x)) - target[static_cast<std::size_t>(k)];
              box_loss += box_weight * d * d;
              sc.grad->at(i, base + k, y, x) = static_cast<T>(box_weight * 2 * d);
            }
          }
        }
      }
    }
  }
  const T inv_n = T(1) / static_cast<T>(n);
  for (auto& v : result.grad.coarse.values()) v *= inv_n;
  for (auto& v : result.grad.fine.values()) v *= inv_n;
  result.value.objectness = obj_loss / n;
  result.value.box = box_loss / n;
  result.value.total = result.value.objectness + result.value.box;
  return result;
}

// ---------------------------------------------------------- DetectorModel

DetectorModel::DetectorModel(DetectorConfig config, AnchorSet anchors)
    : config_(config), anchors_(anchors), net_(config.width, derive_seed(config.seed, "detector-init")) {
  if (config_.input_size <= 0 || config_.input_size % kCoarseStride != 0) {
    throw InvalidArgument("DetectorModel: input_size must be a positive multiple of 32");
  }
  // anchors are stored as float32; keep the in-memory copy identical
  for (auto& a : anchors_) {
    a.w = static_cast<float>(a.w);
    a.h = static_cast<float>(a.h);
  }
}

namespace {

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ",";
    out += s;
  }
  return out;
}

std::set<std::string> split_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Checkpoint DetectorModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.architecture = "detector-" + std::string(to_string(config_.kind)) + "-" + std::to_string(config_.input_size);
  ckpt.metadata = {{"kind", std::string(to_string(config_.kind))},
                   {"input_size", std::to_string(config_.input_size)},
                   {"width", std::to_string(config_.width)},
                   {"confidence_threshold", fmt_double(config_.confidence_threshold)},
                   {"nms_threshold", fmt_double(config_.nms_threshold)},
                   {"seed", std::to_string(config_.seed)},
                   {"training_subjects", join(training_subjects_)}};
  NamedArray anchors{"anchors", {1, 1, 6, 2}, {}};
  for (const auto& a : anchors_) {
    anchors.values.push_back(static_cast<float>(a.w));
    anchors.values.push_back(static_cast<float>(a.h));
  }
  ckpt.arrays.push_back(std::move(anchors));
  store_state(ckpt, const_cast<DetectorNet<float>&>(net_).state(), "net.");
  return ckpt;
}

DetectorModel DetectorModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.architecture.rfind("detector-", 0) != 0) {
    throw ParseError("checkpoint architecture '" + ckpt.architecture + "' is not a detector");
  }
  DetectorConfig cfg;
  const auto kind = parse_region_kind(ckpt.meta("kind"));
  if (!kind) throw ParseError("checkpoint: bad detector kind");
  cfg.kind = *kind;
  try {
    cfg.input_size = std::stoi(ckpt.meta("input_size"));
    cfg.width = std::stoi(ckpt.meta("width"));
    cfg.confidence_threshold = std::stod(ckpt.meta("confidence_threshold"));
    cfg.nms_threshold = std::stod(ckpt.meta("nms_threshold"));
    cfg.seed = std::stoull(ckpt.meta("seed"));
  } catch (const std::logic_error&) {
    throw ParseError("checkpoint: malformed detector metadata");
  }
  const NamedArray* a = ckpt.find("anchors");
  if (!a || a->values.size() != 12) throw ParseError("checkpoint: missing anchors");
  AnchorSet anchors;
  for (std::size_t j = 0; j < 6; ++j) anchors[j] = {a->values[2 * j], a->values[2 * j + 1]};
  DetectorModel model(cfg, anchors);
  load_state(ckpt, model.net_.state(), "net.");
  model.training_subjects_ = split_set(ckpt.meta("training_subjects"));
  return model;
}

void DetectorModel::save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

DetectorModel DetectorModel::load(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

// --------------------------------------------------------------- training

namespace {

struct Prepared {
  std::vector<float> pixels;  // 3 x S x S
  BoundingBox box;            // input coordinates
};

Prepared prepare(const DetectorSample& s, int side) {
  SquareView view;
  const cv::Mat img = square_view(s.image, side, &view);
  Prepared p;
  p.pixels.resize(static_cast<std::size_t>(3) * side * side);
  image_to_chw(img, p.pixels.data());
  p.box = clip_box(view.to_view(s.box), side, side);
  return p;
}

void flip_into(const float* src, int side, float* dst) {
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < side; ++y) {
      const float* row = src + (static_cast<std::size_t>(c) * side + y) * side;
      float* out = dst + (static_cast<std::size_t>(c) * side + y) * side;
      for (int x = 0; x < side; ++x) out[x] = row[side - 1 - x];
    }
  }
}

void color_jitter(float* chw, int side, Rng& rng) {
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_real_distribution<float> gain(0.6f, 1.4f), offset(-0.2f, 0.2f);
  std::bernoulli_distribution invert(0.2);
  const bool inv = invert(rng);
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::vector<float> copy(chw, chw + 3 * plane);
  for (int c = 0; c < 3; ++c) {
    const float g = gain(rng) * (inv ? -1.0f : 1.0f);
    const float o = offset(rng);
    const float* src = copy.data() + static_cast<std::size_t>(perm[static_cast<std::size_t>(c)]) * plane;
    float* dst = chw + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = std::clamp(g * src[i] + o, -0.5f, 0.5f);
  }
}

}  // namespace

DetectorModel train_detector(const std::vector<DetectorSample>& dataset, const DetectorConfig& config,
                             DetectorTrainingLog* log) {
  if (dataset.empty()) throw InvalidArgument("train_detector: empty dataset");
  if (config.epochs <= 0 || config.batch_size <= 0) throw InvalidArgument("train_detector: bad schedule");
  const int side = config.input_size;
  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  std::vector<std::pair<double, double>> shapes;
  for (const auto& s : dataset) {
    if (s.image.empty() || !s.box.valid()) throw InvalidArgument("train_detector: sample without a valid box");
    prepared.push_back(prepare(s, side));
    if (!prepared.back().box.valid()) throw InvalidArgument("train_detector: box outside its image");
    shapes.emplace_back(prepared.back().box.width(), prepared.back().box.height());
  }

  DetectorModel model(config, kmeans_anchors(shapes));
  auto& net = model.net();
  const auto params = net.parameters();
  nn::SgdMomentum<float> optimizer(static_cast<float>(config.momentum), static_cast<float>(config.weight_decay));
  Rng rng(derive_seed(config.seed, "detector-train"));
  std::bernoulli_distribution coin(0.5);
  Rng color_rng(derive_seed(config.seed, "detector-color"));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto lr = static_cast<float>(nn::cosine_learning_rate(config.learning_rate, epoch, config.epochs));
    double epoch_loss = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const int bn = static_cast<int>(end - start);
      Tensor<float> batch(bn, 3, side, side);
      std::vector<BoundingBox> targets;
      for (int b = 0; b < bn; ++b) {
        const Prepared& p = prepared[order[start + static_cast<std::size_t>(b)]];
        BoundingBox box = p.box;
        if (config.flip_augment && coin(rng)) {
          flip_into(p.pixels.data(), side, batch.sample(b));
          box = {side - p.box.x_max, p.box.y_min, side - p.box.x_min, p.box.y_max};
        } else {
          std::copy(p.pixels.begin(), p.pixels.end(), batch.sample(b));
        }
        if (config.color_augment) color_jitter(batch.sample(b), side, color_rng);
        targets.push_back(box);
      }
      net.zero_grad();
      const auto out = net.forward(batch, Mode::kTrain);
      const auto loss = detector_loss<float>(out, targets, model.anchors(), config.box_weight, config.noobj_weight);
      if (!std::isfinite(loss.value.total)) {
        throw TrainingError("train_detector: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (objectness " + std::to_string(loss.value.objectness) +
                            ", box " + std::to_string(loss.value.box) + ")");
      }
      net.backward(loss.grad);
      if (!nn::all_finite(params)) {
        throw TrainingError("train_detector: non-finite gradient at epoch " + std::to_string(epoch));
      }
      optimizer.step(params, lr);
      epoch_loss += loss.value.total;
      ++batches;
      if (log) log->step_loss.push_back(loss.value.total);
    }
    if (log) log->epoch_loss.push_back(epoch_loss / batches);
  }
  return model;
}

// -------------------------------------------------------------- inference

std::vector<Detection> detect(const DetectorModel& model, const cv::Mat& image) {
  if (image.empty()) return {};
  const auto& cfg = model.config();
  const int side = cfg.input_size;
  SquareView view;
  const cv::Mat img = square_view(image, side, &view);
  Tensor<float> x(1, 3, side, side);
  image_to_chw(img, x.data());
  const auto out = model.net().infer(x);

  std::vector<Detection> dets;
  auto decode = [&](const Tensor<float>& pred, int stride, int anchor_offset) {
    for (int a = 0; a < kAnchorsPerScale; ++a) {
      const Anchor& anchor = model.anchors()[static_cast<std::size_t>(anchor_offset + a)];
      const int base = a * kOutputsPerAnchor;
      for (int y = 0; y < pred.h(); ++y) {
        for (int x_ = 0; x_ < pred.w(); ++x_) {
          const double conf = nn::sigmoid<double>(pred.at(0, base + 4, y, x_));
          if (conf < cfg.confidence_threshold) continue;
          const double cx = (x_ + nn::sigmoid<double>(pred.at(0, base + 0, y, x_))) * stride;
          const double cy = (y + nn::sigmoid<double>(pred.at(0, base + 1, y, x_))) * stride;
          const double w = anchor.w * std::exp(std::min<double>(pred.at(0, base + 2, y, x_), 8.0));
          const double h = anchor.h * std::exp(std::min<double>(pred.at(0, base + 3, y, x_), 8.0));
          const BoundingBox in_view{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
          const BoundingBox src = clip_box(view.to_source(in_view), image.cols, image.rows);
          if (!src.valid()) continue;
          dets.push_back({src, conf, cfg.kind});
        }
      }
    }
  };
  decode(out.fine, kFineStride, 0);
  decode(out.coarse, kCoarseStride, kAnchorsPerScale);
  return nms(std::move(dets), cfg.nms_threshold);
}

double mean_top_iou(const DetectorModel& model, const std::vector<DetectorSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0;
  for (const auto& s : samples) {
    const auto dets = detect(model, s.image);
    if (!dets.empty()) total += iou(dets.front().box, s.box);
  }
  return total / static_cast<double>(samples.size());
}

template class DetectorNet<float>;
template class DetectorNet<double>;
template DetectorLoss<float> detector_loss<float>(const DetectorNet<float>::Output&, const std::vector<BoundingBox>&,
                                                  const AnchorSet&, double, double);
template DetectorLoss<double> detector_loss<double>(const DetectorNet<double>::Output&,
                                                    const std::vector<BoundingBox>&, const AnchorSet&, double,
                                                    double);

}  // namespace equicascade::roi
