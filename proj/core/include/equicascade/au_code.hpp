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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace equicascade {

/// Facial region an action unit is evaluated on.
enum class FacialRegion { kEye, kLowerFace };

/// A validated EquiFACS code ("AU101", "AD38", "EAD104", ...).
///
/// Construction only succeeds for codes in the manifest roster, so any
/// AuCode in flight is known to be well formed.
class AuCode {
 public:
  /// Throws ParseError for codes outside the roster.
  explicit AuCode(std::string_view code);

  static std::optional<AuCode> parse(std::string_view code);

  const std::string& str() const { return code_; }

  /// True for the nine codes the classifiers are built for.
  bool in_scope() const;

  /// Region for an in-scope code; nullopt otherwise.
  std::optional<FacialRegion> region() const;

  friend bool operator==(const AuCode&, const AuCode&) = default;
  friend auto operator<=>(const AuCode& a, const AuCode& b) { return a.code_ <=> b.code_; }

 private:
  std::string code_;
};

/// All 31 codes a manifest may carry.
std::span<const std::string_view> au_roster();

/// The nine in-scope codes, lexicographically sorted.
std::vector<AuCode> in_scope_codes();

/// Ear descriptors excluded by default from class selection.
std::vector<AuCode> default_excluded_codes();

/// Report row order: AU101 first, then the eye and lower-face codes.
/// Codes not listed sort after, lexicographically.
int report_rank(const AuCode& code);

std::string_view to_string(FacialRegion region);

}  // namespace equicascade

template <>
struct std::hash<equicascade::AuCode> {
  std::size_t operator()(const equicascade::AuCode& c) const noexcept {
    return std::hash<std::string>{}(c.str());
  }
};
