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

#include <memory>
#include <string>
#include <vector>

#include "equicascade/nn/tensor.hpp"

namespace equicascade::nn {

enum class Mode { kTrain, kEval };

/// Trainable array plus its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Non-trainable state that is still persisted (running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* value;
};

/// A differentiable layer. forward() caches whatever backward() needs, so a
/// layer instance handles one forward/backward pair at a time.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  /// Caching forward pass; required before backward().
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Eval-mode forward pass that touches no layer state (safe to call
  /// concurrently on a shared instance).
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
  /// Returns dL/dx and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }

  /// Prepends `prefix` to parameter and buffer names.
  virtual void add_name_prefix(const std::string& prefix) {
    for (auto* p : parameters()) p->name = prefix + p->name;
  }
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

}  // namespace equicascade::nn
