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

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "equicascade/nn/layer.hpp"

namespace equicascade::nn {

/// Named tensor reference used for checkpointing.
template <typename T>
struct StateEntry {
  std::string name;
  Tensor<T>* tensor;
};

/// Ordered stack of named layers.
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  /// Appends a layer; its parameters are renamed "<name>.<param>".
  void add(std::string name, LayerPtr<T> layer);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  /// Stateless eval-mode pass.
  Tensor<T> infer(const Tensor<T>& x) const;

  /// Like forward() but also records every layer's output.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::vector<Tensor<T>>& outputs);

  /// Backpropagates through layers [first, size()) in reverse and returns
  /// the gradient w.r.t. the input of layer `first`.
  Tensor<T> backward(const Tensor<T>& grad_out, std::size_t first = 0);

  std::vector<Parameter<T>*> parameters();
  std::vector<StateEntry<T>> state();
  void zero_grad();
  std::size_t parameter_count();

  std::size_t size() const { return layers_.size(); }
  const std::string& name(std::size_t i) const { return layers_[i].first; }
  Layer<T>& layer(std::size_t i) { return *layers_[i].second; }
  /// Index of the named layer, or size() when absent.
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> layers_;
};

/// Mean binary cross-entropy over N single-logit outputs.
template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;
};

template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets);

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// Stochastic gradient descent with classical momentum.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(T momentum, T weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<Parameter<T>*>& params, T learning_rate);

 private:
  T momentum_;
  T weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

/// base * (1 + cos(pi * epoch / total)) / 2.
double cosine_learning_rate(double base, int epoch, int total_epochs);

/// True if every gradient and value is finite.
template <typename T>
bool all_finite(const std::vector<Parameter<T>*>& params);

}  // namespace equicascade::nn
