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

#include "equicascade/au_code.hpp"

#include <algorithm>
#include <array>

#include "equicascade/error.hpp"

namespace equicascade {
namespace {

constexpr std::array<std::string_view, 31> kRoster = {
    // upper face
    "AU101", "AU145", "AU143", "AU47", "AU5", "AD1",
    // lower face
    "AUH13", "AU10", "AU12", "AU113", "AU16", "AU17", "AU18", "AU122", "AU24", "AU25",
    "AU26", "AU27", "AD38", "AD19", "AD160", "AD133", "AD81", "AD113",
    // ears
    "EAD101", "EAD102", "EAD103", "EAD104",
    // head movement
    "AD51", "AD52", "AD53"};

constexpr std::array<std::string_view, 5> kEyeCodes = {"AD1", "AU101", "AU145", "AU47", "AU5"};
constexpr std::array<std::string_view, 4> kLowerFaceCodes = {"AD19", "AD38", "AU25", "AUH13"};

constexpr std::array<std::string_view, 9> kReportOrder = {
    "AU101", "AD1", "AU145", "AU47", "AU5", "AU25", "AD19", "AD38", "AUH13"};

bool contains(std::span<const std::string_view> list, std::string_view code) {
  return std::find(list.begin(), list.end(), code) != list.end();
}

}  // namespace

AuCode::AuCode(std::string_view code) : code_(code) {
  if (!contains(kRoster, code)) {
    throw ParseError("unknown AU code '" + std::string(code) + "'");
  }
}

std::optional<AuCode> AuCode::parse(std::string_view code) {
  if (!contains(kRoster, code)) return std::nullopt;
  return AuCode(code);
}

bool AuCode::in_scope() const { return region().has_value(); }

std::optional<FacialRegion> AuCode::region() const {
  if (contains(kEyeCodes, code_)) return FacialRegion::kEye;
  if (contains(kLowerFaceCodes, code_)) return FacialRegion::kLowerFace;
  return std::nullopt;
}

std::span<const std::string_view> au_roster() { return kRoster; }

std::vector<AuCode> in_scope_codes() {
  std::vector<AuCode> out;
  for (auto c : kEyeCodes) out.emplace_back(c);
  for (auto c : kLowerFaceCodes) out.emplace_back(c);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AuCode> default_excluded_codes() { return {AuCode("EAD101"), AuCode("EAD104")}; }

int report_rank(const AuCode& code) {
  auto it = std::find(kReportOrder.begin(), kReportOrder.end(), code.str());
  if (it != kReportOrder.end()) return static_cast<int>(it - kReportOrder.begin());
  return static_cast<int>(kReportOrder.size());
}

std::string_view to_string(FacialRegion region) {
  return region == FacialRegion::kEye ? "eye" : "lower_face";
}

}  // namespace equicascade
