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

#include "equicascade/nn/sequential.hpp"

#include <cmath>
#include <numbers>

namespace equicascade::nn {

template <typename T>
void Sequential<T>::add(std::string name, LayerPtr<T> layer) {
  layer->add_name_prefix(name + ".");
  layers_.emplace_back(std::move(name), std::move(layer));
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& [name, layer] : layers_) h = layer->infer(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode, std::vector<Tensor<T>>& outputs) {
  outputs.clear();
  outputs.reserve(layers_.size());
  Tensor<T> h = x;
  for (auto& [name, layer] : layers_) {
    h = layer->forward(h, mode);
    outputs.push_back(h);
  }
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out, std::size_t first) {
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > first;) g = layers_[i].second->backward(g);
  return g;
}

template <typename T>
std::vector<Parameter<T>*> Sequential<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& [name, layer] : layers_) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<StateEntry<T>> Sequential<T>::state() {
  std::vector<StateEntry<T>> out;
  for (auto& [name, layer] : layers_) {
    for (auto* p : layer->parameters()) out.push_back({p->name, &p->value});
    for (auto b : layer->buffers()) out.push_back({b.name, b.value});
  }
  return out;
}

template <typename T>
void Sequential<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

template <typename T>
std::size_t Sequential<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
std::size_t Sequential<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].first == name) return i;
  }
  return layers_.size();
}

template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets) {
  if (logits.size() != targets.size() || logits.n() != static_cast<int>(targets.size())) {
    throw InvalidArgument("bce_with_logits: expected one logit per target");
  }
  LossResult<T> r;
  r.grad = Tensor<T>::zeros_like(logits);
  const double n = static_cast<double>(targets.size());
  double total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double z = logits[i];
    const double y = targets[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.grad[i] = static_cast<T>((sigmoid(z) - y) / n);
  }
  r.loss = total / n;
  return r;
}

template <typename T>
void SgdMomentum<T>::step(const std::vector<Parameter<T>*>& params, T learning_rate) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (auto* p : params) velocity_.push_back(Tensor<T>::zeros_like(p->value));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i] + weight_decay_ * p.value[i];
      v[i] = momentum_ * v[i] + g;
      p.value[i] -= learning_rate * v[i];
    }
  }
}

double cosine_learning_rate(double base, int epoch, int total_epochs) {
  if (total_epochs <= 0) return base;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

template <typename T>
bool all_finite(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (!std::isfinite(p->value[i]) || !std::isfinite(p->grad[i])) return false;
    }
  }
  return true;
}

template class Sequential<float>;
template class Sequential<double>;
template class SgdMomentum<float>;
template class SgdMomentum<double>;
template LossResult<float> bce_with_logits(const Tensor<float>&, const std::vector<float>&);
template LossResult<double> bce_with_logits(const Tensor<double>&, const std::vector<double>&);
template bool all_finite(const std::vector<Parameter<float>*>&);
template bool all_finite(const std::vector<Parameter<double>*>&);

}  // namespace equicascade::nn
