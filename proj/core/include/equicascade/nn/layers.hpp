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
#include <vector>

#include "equicascade/nn/layer.hpp"
#include "equicascade/rng.hpp"

namespace equicascade::nn {

/// 2-D convolution, square kernel, symmetric zero padding. Weights are
/// He-normal initialised from `rng`.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias, Rng& rng);

  std::string kind() const override { return "conv"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }
  int output_size(int input) const { return (input + 2 * pad_ - k_) / stride_ + 1; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  void im2col(const T* src, int h, int w, T* cols) const;
  void col2im(const T* cols, int h, int w, T* dst) const;

  int in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// Per-channel batch normalisation. Train mode normalises with batch
/// statistics and updates running averages; eval mode uses the averages.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, T momentum = T(0.1), T eps = T(1e-5));

  std::string kind() const override { return "batchnorm"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override;
  std::vector<Buffer<T>> buffers() override;
  void add_name_prefix(const std::string& prefix) override;

 private:
  int channels_;
  std::string buffer_prefix_;
  T momentum_, eps_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode last_mode_ = Mode::kEval;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> input_;
};

template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(T slope = T(0.1)) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  T slope_;
  Tensor<T> input_;
};

/// Max pooling without padding; ties resolve to the first maximum.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int kernel, int stride) : k_(kernel), stride_(stride) {}
  std::string kind() const override { return "maxpool"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  int output_size(int input) const { return (input - k_) / stride_ + 1; }

 private:
  Tensor<T> pool(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const;

  int k_, stride_;
  std::array<int, 4> in_dims_{};
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::array<int, 4> in_dims_{};
};

/// Fully connected layer over the flattened C*H*W sample; output is (N, out, 1, 1).
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features, Rng& rng);
  std::string kind() const override { return "linear"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// Region layer: the feature map is partitioned into a grid x grid set of
/// cells (cell edges at floor(i * H / grid)), and every cell gets its own
/// residual block  y = x + conv3x3(relu(bn(x))).
template <typename T>
class RegionLayer final : public Layer<T> {
 public:
  RegionLayer(int channels, int grid, Rng& rng);
  std::string kind() const override { return "region"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override;
  std::vector<Buffer<T>> buffers() override;
  void add_name_prefix(const std::string& prefix) override;

  int grid() const { return grid_; }

 private:
  struct Cell {
    BatchNorm2d<T> bn;
    ReLU<T> relu;
    Conv2d<T> conv;
  };

  int channels_, grid_;
  std::vector<Cell> cells_;
  std::array<int, 4> in_dims_{};
};

}  // namespace equicascade::nn
