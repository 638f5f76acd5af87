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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace equicascade {

/// Value of one config key: a scalar or a flat list of scalars.
struct ConfigValue {
  using Scalar = std::variant<bool, std::int64_t, double, std::string>;
  std::variant<Scalar, std::vector<Scalar>> value;

  bool is_list() const { return value.index() == 1; }
  /// Human-readable rendering, used in diagnostics and run records.
  std::string repr() const;
};

/// Experiment configuration read from a small TOML subset:
///
///   # comment
///   seed = 7
///   [classifier]
///   epochs = 20              -> key "classifier.epochs"
///   aus = ["AU101", "AD1"]
///
/// Supported values are quoted strings, integers, floats, true/false and
/// single-line arrays of those. Later assignments override earlier ones.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }
  /// Parses `text` as a single value (as on the right of '=') and stores it.
  void set_from_string(const std::string& key, const std::string& text);
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  /// Typed getters. A missing key returns `fallback`; a key of the wrong
  /// type is recorded as a violation and also returns `fallback`.
  std::string get_string(const std::string& key, const std::string& fallback = "");
  std::int64_t get_int(const std::string& key, std::int64_t fallback = 0);
  double get_double(const std::string& key, double fallback = 0.0);
  bool get_bool(const std::string& key, bool fallback = false);
  std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& fallback = {});
  std::vector<std::int64_t> get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback = {});

  /// Records a violation unless the key is present.
  void require(const std::string& key);
  /// Records a violation unless the key names an existing file or directory.
  void require_path(const std::string& key);
  void add_violation(std::string message) { violations_.push_back(std::move(message)); }
  const std::vector<std::string>& violations() const { return violations_; }
  /// Throws ConfigError listing every violation, if there are any.
  void check() const;

  /// Base directory for relative paths (the config file's directory).
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  /// Resolves a path value against base_dir().
  std::filesystem::path resolve(const std::string& value) const;

 private:
  std::map<std::string, ConfigValue> values_;
  std::vector<std::string> violations_;
  std::filesystem::path base_dir_;
};

}  // namespace equicascade
