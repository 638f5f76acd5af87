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

#include "equicascade/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "equicascade/error.hpp"
#include "equicascade/image_ops.hpp"
#include "equicascade/metrics.hpp"
#include "equicascade/nn/layers.hpp"
#include "equicascade/parallel.hpp"

namespace equicascade::cls {

using nn::Tensor;

std::string_view to_string(Family family) { return family == Family::kDrml ? "drml" : "alexnet"; }

std::string_view to_string(Level level) {
  switch (level) {
    case Level::kFrame: return "frame";
    case Level::kFace: return "face";
    case Level::kRegion: return "region";
  }
  return "?";
}

std::optional<Family> parse_family(std::string_view name) {
  if (name == "drml") return Family::kDrml;
  if (name == "alexnet") return Family::kAlexnet;
  return std::nullopt;
}

std::optional<Level> parse_level(std::string_view name) {
  if (name == "frame") return Level::kFrame;
  if (name == "face") return Level::kFace;
  if (name == "region") return Level::kRegion;
  return std::nullopt;
}

int crop_side(Level level) {
  switch (level) {
    case Level::kFrame: return 176;
    case Level::kFace: return 512;
    case Level::kRegion: return 64;
  }
  return 0;
}

int network_side(Level level) { return level == Level::kRegion ? 64 : 176; }

ClassifierConfig ClassifierConfig::for_level(Family family, Level level) {
  ClassifierConfig c;
  c.family = family;
  c.level = level;
  c.input_side = crop_side(level);
  return c;
}

void ClassifierConfig::validate() const {
  std::vector<std::string> problems;
  if (input_side != crop_side(level)) {
    problems.push_back(std::string(to_string(level)) + " level requires input side " +
                       std::to_string(crop_side(level)) + ", got " + std::to_string(input_side));
  }
  if (base_width < 1) problems.push_back("base_width must be positive");
  if (epochs < 1) problems.push_back("epochs must be positive");
  if (batch_size < 1) problems.push_back("batch_size must be positive");
  if (!(learning_rate > 0)) problems.push_back("learning_rate must be positive");
  if (patience < 1) problems.push_back("patience must be positive");
  if (!(threshold > 0 && threshold < 1)) problems.push_back("threshold must lie in (0, 1)");
  if (!problems.empty()) {
    std::string msg = "invalid classifier config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

std::string architecture_descriptor(const ClassifierConfig& c) {
  return std::string(to_string(c.family)) + "-" + std::string(to_string(c.level)) + "-" + std::to_string(c.input_side);
}

// ----------------------------------------------------------------- networks

namespace {

template <typename T>
void conv_block(nn::Sequential<T>& net, const std::string& idx, int in, int out, int k, int stride, int pad,
                Rng& rng) {
  net.add("conv" + idx, std::make_unique<nn::Conv2d<T>>(in, out, k, stride, pad, false, rng));
  net.add("bn" + idx, std::make_unique<nn::BatchNorm2d<T>>(out));
  net.add("relu" + idx, std::make_unique<nn::ReLU<T>>());
}

}  // namespace

template <typename T>
nn::Sequential<T> make_drml_network(const ClassifierConfig& c, Rng& rng) {
  c.validate();
  const int w = c.base_width;
  nn::Sequential<T> net;
  if (c.level == Level::kRegion) {
    conv_block(net, "1", 3, w, 5, 1, 2, rng);
    conv_block(net, "2", w, w, 3, 1, 1, rng);  // plain stand-in for the region layer
  } else {
    conv_block(net, "1", 3, w, 11, 4, 5, rng);  // 176 -> 44
    net.add("region2", std::make_unique<nn::RegionLayer<T>>(w, 8, rng));
  }
  net.add("pool2", std::make_unique<nn::MaxPool2d<T>>(2, 2));
  conv_block(net, "3", w, 2 * w, 3, 1, 1, rng);
  net.add("pool3", std::make_unique<nn::MaxPool2d<T>>(2, 2));
  conv_block(net, "4", 2 * w, 4 * w, 3, 1, 1, rng);
  net.add("pool4", std::make_unique<nn::MaxPool2d<T>>(2, 2));
  net.add("gap", std::make_unique<nn::GlobalAvgPool<T>>());
  net.add("fc5", std::make_unique<nn::Linear<T>>(4 * w, 4 * w, rng));
  net.add("relu5", std::make_unique<nn::ReLU<T>>());
  net.add("logit", std::make_unique<nn::Linear<T>>(4 * w, 1, rng));
  return net;
}

template <typename T>
nn::Sequential<T> make_alexnet_network(const ClassifierConfig& c, Rng& rng) {
  c.validate();
  const int w = c.base_width;
  nn::Sequential<T> net;
  int side = network_side(c.level);
  if (c.level == Level::kRegion) {
    conv_block(net, "1", 3, w, 5, 2, 2, rng);
    side = (side + 4 - 5) / 2 + 1;
  } else {
    conv_block(net, "1", 3, w, 11, 4, 2, rng);
    side = (side + 4 - 11) / 4 + 1;
  }
  auto pool = [&](const std::string& name) {
    net.add(name, std::make_unique<nn::MaxPool2d<T>>(3, 2));
    side = (side - 3) / 2 + 1;
  };
  pool("pool1");
  conv_block(net, "2", w, 2 * w, 5, 1, 2, rng);
  pool("pool2");
  conv_block(net, "3", 2 * w, 3 * w, 3, 1, 1, rng);
  conv_block(net, "4", 3 * w, 3 * w, 3, 1, 1, rng);
  conv_block(net, "5", 3 * w, 2 * w, 3, 1, 1, rng);
  pool("pool5");
  net.add("fc6", std::make_unique<nn::Linear<T>>(2 * w * side * side, 8 * w, rng));
  net.add("relu6", std::make_unique<nn::ReLU<T>>());
  net.add("fc7", std::make_unique<nn::Linear<T>>(8 * w, 8 * w, rng));
  net.add("relu7", std::make_unique<nn::ReLU<T>>());
  net.add("logit", std::make_unique<nn::Linear<T>>(8 * w, 1, rng));
  return net;
}

template <typename T>
nn::Sequential<T> make_network(const ClassifierConfig& c, Rng& rng) {
  return c.family == Family::kDrml ? make_drml_network<T>(c, rng) : make_alexnet_network<T>(c, rng);
}

std::string default_cam_layer(const ClassifierConfig& c) { return c.family == Family::kDrml ? "relu4" : "relu5"; }

template nn::Sequential<float> make_drml_network<float>(const ClassifierConfig&, Rng&);
template nn::Sequential<double> make_drml_network<double>(const ClassifierConfig&, Rng&);
template nn::Sequential<float> make_alexnet_network<float>(const ClassifierConfig&, Rng&);
template nn::Sequential<double> make_alexnet_network<double>(const ClassifierConfig&, Rng&);
template nn::Sequential<float> make_network<float>(const ClassifierConfig&, Rng&);
template nn::Sequential<double> make_network<double>(const ClassifierConfig&, Rng&);

// --------------------------------------------------------------- classifier

void TrainingCurve::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write training curve '" + path.string() + "'");
  out << "epoch,train_loss,val_acc,val_f1\n";
  out.precision(17);
  for (const auto& p : points) out << p.epoch << ',' << p.train_loss << ',' << p.val_acc << ',' << p.val_f1 << '\n';
}

namespace {

nn::Sequential<float> initial_network(const ClassifierConfig& c) {
  Rng rng(derive_seed(c.seed, "classifier-init"));
  return make_network<float>(c, rng);
}

}  // namespace

BinaryClassifier::BinaryClassifier(ClassifierConfig config) : config_(config), net_(initial_network(config)) {}

cv::Mat BinaryClassifier::to_network_input(const cv::Mat& crop) const {
  if (crop.empty() || crop.type() != CV_8UC3 || crop.rows != crop.cols) {
    throw InvalidArgument("classifier input must be a square 8-bit BGR image");
  }
  const int net_side = network_side(config_.level);
  if (crop.cols == net_side) return crop;
  if (crop.cols != config_.input_side) {
    throw InvalidArgument("classifier " + descriptor() + " expects a " + std::to_string(config_.input_side) +
                          "-pixel crop, got " + std::to_string(crop.cols));
  }
  return resize_square(crop, net_side);
}

void BinaryClassifier::fill_input(const cv::Mat& crop, float* chw) const { image_to_chw(to_network_input(crop), chw); }

std::vector<double> BinaryClassifier::probabilities(const std::vector<cv::Mat>& crops, int workers) const {
  const int side = network_side(config_.level);
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (crops.size() + kChunk - 1) / kChunk;
  std::vector<double> out(crops.size());
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(crops.size(), begin + kChunk);
    Tensor<float> x(static_cast<int>(end - begin), 3, side, side);
    for (std::size_t i = begin; i < end; ++i) fill_input(crops[i], x.sample(static_cast<int>(i - begin)));
    const auto logits = net_.infer(x);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = nn::sigmoid<double>(logits[i - begin]);
    }
  });
  return out;
}

Prediction BinaryClassifier::predict(const cv::Mat& crop) const {
  const double p = probabilities({crop}, 1).front();
  return {p, p >= config_.threshold};
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Checkpoint BinaryClassifier::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.architecture = descriptor();
  std::string subjects;
  for (const auto& s : training_subjects_) subjects += (subjects.empty() ? "" : ",") + s;
  ckpt.metadata = {{"family", std::string(to_string(config_.family))},
                   {"level", std::string(to_string(config_.level))},
                   {"input_side", std::to_string(config_.input_side)},
                   {"base_width", std::to_string(config_.base_width)},
                   {"threshold", fmt_double(config_.threshold)},
                   {"seed", std::to_string(config_.seed)},
                   {"training_subjects", subjects}};
  store_state(ckpt, const_cast<nn::Sequential<float>&>(net_).state(), "net.");
  return ckpt;
}

BinaryClassifier BinaryClassifier::from_checkpoint(const Checkpoint& ckpt) {
  const auto family = parse_family(ckpt.meta("family"));
  const auto level = parse_level(ckpt.meta("level"));
  if (!family || !level) throw ParseError("checkpoint '" + ckpt.architecture + "' is not a classifier");
  ClassifierConfig c = ClassifierConfig::for_level(*family, *level);
  try {
    c.input_side = std::stoi(ckpt.meta("input_side"));
    c.base_width = std::stoi(ckpt.meta("base_width"));
    c.threshold = std::stod(ckpt.meta("threshold"));
    c.seed = std::stoull(ckpt.meta("seed"));
  } catch (const std::logic_error&) {
    throw ParseError("checkpoint: malformed classifier metadata");
  }
  if (architecture_descriptor(c) != ckpt.architecture) {
    throw ParseError("checkpoint architecture '" + ckpt.architecture + "' does not match its metadata");
  }
  BinaryClassifier clf(c);
  load_state(ckpt, clf.net_.state(), "net.");
  std::stringstream ss(ckpt.meta("training_subjects"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) clf.training_subjects_.insert(item);
  }
  return clf;
}

void BinaryClassifier::save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

BinaryClassifier BinaryClassifier::load(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

BinaryClassifier BinaryClassifier::clone() const { return from_checkpoint(to_checkpoint()); }

BinaryClassifier build_drml(ClassifierConfig config) {
  config.family = Family::kDrml;
  return BinaryClassifier(config);
}

BinaryClassifier build_alexnet(ClassifierConfig config) {
  config.family = Family::kAlexnet;
  return BinaryClassifier(config);
}

BinaryClassifier build_classifier(const ClassifierConfig& config) { return BinaryClassifier(config); }

// ----------------------------------------------------------------- training

namespace {

void flip_chw(float* data, int side) {
  for (int r = 0; r < 3 * side; ++r) std::reverse(data + static_cast<std::size_t>(r) * side, data + (r + 1) * side);
}

}  // namespace

TrainingCurve train_binary(BinaryClassifier& clf, const std::vector<LabeledImage>& train,
                           const std::vector<LabeledImage>& val, int workers) {
  if (train.empty()) throw InvalidArgument("train_binary: empty training set");
  if (val.empty()) throw InvalidArgument("train_binary: empty validation set");
  const ClassifierConfig& cfg = clf.config();
  const int side = network_side(cfg.level);

  std::vector<cv::Mat> train_images;
  train_images.reserve(train.size());
  for (const auto& s : train) train_images.push_back(clf.to_network_input(s.image));
  std::vector<cv::Mat> val_images;
  std::vector<bool> val_labels;
  for (const auto& s : val) {
    val_images.push_back(clf.to_network_input(s.image));
    val_labels.push_back(s.positive);
  }

  auto& net = clf.network();
  const auto params = net.parameters();
  const auto state = net.state();
  std::vector<Tensor<float>> best;
  nn::SgdMomentum<float> optimizer(static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));
  Rng rng(derive_seed(cfg.seed, "classifier-train"));
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto lr = static_cast<float>(cfg.learning_rate);
  const std::size_t plane = static_cast<std::size_t>(3) * side * side;

  TrainingCurve curve;
  double best_f1 = -1;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int bn = static_cast<int>(end - start);
      Tensor<float> x(bn, 3, side, side);
      std::vector<float> targets(static_cast<std::size_t>(bn));
      for (int b = 0; b < bn; ++b) {
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        image_to_chw(train_images[idx], x.data() + static_cast<std::size_t>(b) * plane);
        const bool flip = coin(rng);
        if (cfg.flip_augment && flip) flip_chw(x.sample(b), side);
        targets[static_cast<std::size_t>(b)] = train[idx].positive ? 1.0f : 0.0f;
      }
      net.zero_grad();
      const auto logits = net.forward(x, nn::Mode::kTrain);
      const auto loss = nn::bce_with_logits(logits, targets);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("train_binary: non-finite loss at epoch " + std::to_string(epoch));
      }
      net.backward(loss.grad);
      if (!nn::all_finite(params)) throw TrainingError("train_binary: non-finite gradient at epoch " + std::to_string(epoch));
      optimizer.step(params, lr);
      loss_sum += loss.loss * bn;
      seen += static_cast<std::size_t>(bn);
    }

    const auto probs = clf.probabilities(val_images, workers);
    std::vector<bool> decisions;
    for (double p : probs) decisions.push_back(p >= cfg.threshold);
    const auto m = eval::binary_metrics(decisions, val_labels);
    curve.points.push_back({epoch, loss_sum / static_cast<double>(seen), m.accuracy, m.f1});
    if (m.f1 > best_f1) {
      best_f1 = m.f1;
      curve.best_epoch = epoch;
      best.clear();
      for (const auto& e : state) best.push_back(*e.tensor);
    } else if (epoch - curve.best_epoch >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < state.size(); ++i) *state[i].tensor = best[i];
  return curve;
}

}  // namespace equicascade::cls
