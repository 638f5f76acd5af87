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

#include <cstddef>
#include <vector>

namespace equicascade::eval {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct BinaryMetrics {
  double accuracy = 0;
  double f1 = 0;
  Confusion confusion;
};

/// accuracy = correct / total; f1 = 2PR / (P + R), 0 when P + R = 0.
/// Throws InvalidArgument for empty or mismatched inputs.
BinaryMetrics binary_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels);

/// Arithmetic mean; throws on empty input.
double mean(const std::vector<double>& values);
/// Sample standard deviation (n - 1); 0 for a single value.
double sample_std(const std::vector<double>& values);

}  // namespace equicascade::eval
