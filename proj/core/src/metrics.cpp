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

#include "equicascade/metrics.hpp"

#include <cmath>
#include <numeric>

#include "equicascade/error.hpp"

namespace equicascade::eval {

BinaryMetrics binary_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.empty()) throw InvalidArgument("binary_metrics: empty input");
  if (predictions.size() != labels.size()) throw InvalidArgument("binary_metrics: length mismatch");
  BinaryMetrics m;
  Confusion& c = m.confusion;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i]) {
      ++(labels[i] ? c.tp : c.fp);
    } else {
      ++(labels[i] ? c.fn : c.tn);
    }
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(predictions.size());
  const double precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  const double recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  return m;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("mean: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  const double mu = mean(values);
  if (values.size() < 2) return 0.0;
  double ss = 0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace equicascade::eval
