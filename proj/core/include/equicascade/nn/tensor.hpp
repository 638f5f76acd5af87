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

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "equicascade/error.hpp"

namespace equicascade::nn {

/// Dense NCHW tensor with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : dims_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.n(), other.c(), other.h(), other.w());
  }

  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(dims_[2]) * dims_[3]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(dims_[1]) * plane(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* sample(int i) { return data_.data() + sample_size() * static_cast<std::size_t>(i); }
  const T* sample(int i) const { return data_.data() + sample_size() * static_cast<std::size_t>(i); }

  T& at(int i, int k, int y, int x) { return data_[index(i, k, y, x)]; }
  const T& at(int i, int k, int y, int x) const { return data_[index(i, k, y, x)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  std::string shape_string() const {
    return "(" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
           std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + ")";
  }

 private:
  std::size_t index(int i, int k, int y, int x) const {
    return ((static_cast<std::size_t>(i) * dims_[1] + k) * dims_[2] + y) * dims_[3] + x;
  }

  std::array<int, 4> dims_{0, 0, 0, 0};
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(where) + ": shape mismatch " + a.shape_string() + " vs " +
                          b.shape_string());
  }
}

}  // namespace equicascade::nn
