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

// Independent reference implementations used as test oracles. They are
// deliberately naive and share no code with the library.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "equicascade/geometry.hpp"

namespace oracle {

/// IoU by counting covered cells of a grid with `res` cells per pixel.
inline double raster_iou(const equicascade::BoundingBox& a, const equicascade::BoundingBox& b, double extent,
                         int res) {
  const int n = static_cast<int>(extent * res);
  long inter = 0;
  long uni = 0;
  for (int iy = 0; iy < n; ++iy) {
    const double y = (iy + 0.5) / res;
    for (int ix = 0; ix < n; ++ix) {
      const double x = (ix + 0.5) / res;
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Plain box IoU written from the definition.
inline double plain_iou(const equicascade::BoundingBox& a, const equicascade::BoundingBox& b) {
  const double w = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double h = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = w * h;
  const double uni = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// O(n^2) greedy suppression: a detection survives when no detection that
/// ranks before it (higher confidence, or equal confidence and earlier
/// input position) and itself survives overlaps it by more than `thr`.
inline std::vector<equicascade::Detection> quadratic_nms(const std::vector<equicascade::Detection>& dets, double thr) {
  const std::size_t n = dets.size();
  auto before = [&](std::size_t i, std::size_t j) {
    return dets[i].confidence > dets[j].confidence || (dets[i].confidence == dets[j].confidence && i < j);
  };
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  // selection by repeated scanning, no sort
  std::vector<bool> alive(n, false);
  std::vector<bool> decided(n, false);
  std::vector<equicascade::Detection> out;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!decided[i] && (best == n || before(i, best))) best = i;
    }
    bool keep = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (alive[j] && plain_iou(dets[j].box, dets[best].box) > thr) keep = false;
    }
    decided[best] = true;
    alive[best] = keep;
    if (keep) out.push_back(dets[best]);
  }
  return out;
}

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion count(const std::vector<bool>& pred, const std::vector<bool>& label) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && label[i]) ++c.tp;
    if (pred[i] && !label[i]) ++c.fp;
    if (!pred[i] && label[i]) ++c.fn;
    if (!pred[i] && !label[i]) ++c.tn;
  }
  return c;
}

/// F1 from precision and recall as in the textbook definition.
inline double f1(const Confusion& c) {
  const double p = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double r = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

/// Central difference of `loss` with respect to `v`.
inline double central_difference(const std::function<double()>& loss, double& v, double eps) {
  const double keep = v;
  v = keep + eps;
  const double up = loss();
  v = keep - eps;
  const double down = loss();
  v = keep;
  return (up - down) / (2 * eps);
}

/// Relative error with a small absolute floor for near-zero gradients.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

/// Fresh scratch directory below the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("eqc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Per-code clip counts of a reference corpus; codes not listed
/// have fewer than 200 clips.
inline std::map<std::string, int> reference_class_counts() {
  return {{"AD1", 394},    {"AD19", 443},  {"AD38", 696},    {"AU101", 1918},  {"AU145", 3856}, {"AU25", 478},
          {"AU47", 1816},  {"AU5", 208},   {"AUH13", 353},   {"EAD101", 4778}, {"EAD104", 5240}};
}

/// The nine codes the reference counts must select, sorted.
inline std::vector<std::string> reference_selection() {
  return {"AD1", "AD19", "AD38", "AU101", "AU145", "AU25", "AU47", "AU5", "AUH13"};
}

}  // namespace oracle
