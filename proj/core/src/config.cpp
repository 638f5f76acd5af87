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

#include "equicascade/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "equicascade/error.hpp"

namespace equicascade {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

ConfigValue::Scalar parse_scalar(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (t.empty()) throw ParseError(where + ": missing value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw ParseError(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) {
        const char n = t[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += t[i];
      }
    }
    return out;
  }
  if (t == "true") return true;
  if (t == "false") return false;
  std::string digits;
  for (char c : t) {
    if (c != '_') digits += c;
  }
  try {
    std::size_t used = 0;
    if (digits.find_first_of(".eE") == std::string::npos || digits.rfind("0x", 0) == 0) {
      const long long v = std::stoll(digits, &used, 0);
      if (used == digits.size()) return static_cast<std::int64_t>(v);
    } else {
      const double v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::logic_error&) {
  }
  throw ParseError(where + ": cannot parse value '" + t + "'");
}

ConfigValue parse_value(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw ParseError(where + ": unterminated array");
    std::vector<ConfigValue::Scalar> items;
    std::string cur;
    bool quoted = false;
    const std::string body = t.substr(1, t.size() - 2);
    for (std::size_t i = 0; i < body.size(); ++i) {
      const char c = body[i];
      if (c == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
      if (c == ',' && !quoted) {
        if (!trim(cur).empty()) items.push_back(parse_scalar(cur, where));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) items.push_back(parse_scalar(cur, where));
    return {items};
  }
  return {parse_scalar(t, where)};
}

std::string scalar_repr(const ConfigValue::Scalar& s) {
  struct V {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      std::ostringstream os;
      os.precision(17);
      os << d;
      return os.str();
    }
    std::string operator()(const std::string& s) const { return "\"" + s + "\""; }
  };
  return std::visit(V{}, s);
}

}  // namespace

std::string ConfigValue::repr() const {
  if (!is_list()) return scalar_repr(std::get<0>(value));
  std::string out = "[";
  const auto& items = std::get<1>(value);
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + scalar_repr(items[i]);
  return out + "]";
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!valid_key(section)) throw ParseError(where + ": invalid section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) throw ParseError(where + ": invalid key '" + key + "'");
    cfg.values_[section.empty() ? key : section + "." + key] = parse_value(t.substr(eq + 1), where);
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path.string() + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse(ss.str(), path.string());
  cfg.base_dir_ = path.parent_path();
  return cfg;
}

void RunConfig::set_from_string(const std::string& key, const std::string& text) {
  try {
    values_[key] = parse_value(text, "--" + key);
  } catch (const ParseError&) {
    values_[key] = ConfigValue{ConfigValue::Scalar{text}};
  }
}

namespace {

template <typename T>
const T* scalar_as(const ConfigValue& v) {
  if (v.is_list()) return nullptr;
  return std::get_if<T>(&std::get<0>(v.value));
}

}  // namespace

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* s = scalar_as<std::string>(it->second)) return *s;
  violations_.push_back(key + ": expected a string, got " + it->second.repr());
  return fallback;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* i = scalar_as<std::int64_t>(it->second)) return *i;
  violations_.push_back(key + ": expected an integer, got " + it->second.repr());
  return fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* d = scalar_as<double>(it->second)) return *d;
  if (const auto* i = scalar_as<std::int64_t>(it->second)) return static_cast<double>(*i);
  violations_.push_back(key + ": expected a number, got " + it->second.repr());
  return fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* b = scalar_as<bool>(it->second)) return *b;
  violations_.push_back(key + ": expected true or false, got " + it->second.repr());
  return fallback;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key, const std::vector<std::string>& fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* s = scalar_as<std::string>(it->second)) {
    // A comma-separated string also counts as a list (convenient on the command line).
    std::vector<std::string> out;
    std::stringstream ss(*s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) out.push_back(trim(item));
    }
    return out;
  }
  if (it->second.is_list()) {
    std::vector<std::string> out;
    for (const auto& item : std::get<1>(it->second.value)) {
      if (const auto* s = std::get_if<std::string>(&item)) {
        out.push_back(*s);
      } else {
        violations_.push_back(key + ": expected a list of strings, got " + it->second.repr());
        return fallback;
      }
    }
    return out;
  }
  violations_.push_back(key + ": expected a list of strings, got " + it->second.repr());
  return fallback;
}

std::vector<std::int64_t> RunConfig::get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (const auto* i = scalar_as<std::int64_t>(it->second)) return {*i};
  if (const auto* s = scalar_as<std::string>(it->second)) {
    std::vector<std::int64_t> out;
    std::stringstream ss(*s);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) out.push_back(std::stoll(trim(item)));
      }
      return out;
    } catch (const std::logic_error&) {
      violations_.push_back(key + ": expected a list of integers, got " + it->second.repr());
      return fallback;
    }
  }
  if (it->second.is_list()) {
    std::vector<std::int64_t> out;
    for (const auto& item : std::get<1>(it->second.value)) {
      if (const auto* i = std::get_if<std::int64_t>(&item)) {
        out.push_back(*i);
      } else {
        violations_.push_back(key + ": expected a list of integers, got " + it->second.repr());
        return fallback;
      }
    }
    return out;
  }
  violations_.push_back(key + ": expected a list of integers, got " + it->second.repr());
  return fallback;
}

void RunConfig::require(const std::string& key) {
  if (!has(key)) violations_.push_back(key + ": required but not set");
}

void RunConfig::require_path(const std::string& key) {
  if (!has(key)) {
    violations_.push_back(key + ": required but not set");
    return;
  }
  const std::string v = get_string(key);
  if (v.empty()) return;
  if (!fs::exists(resolve(v))) violations_.push_back(key + ": path '" + resolve(v).string() + "' does not exist");
}

void RunConfig::check() const {
  if (!violations_.empty()) throw ConfigError(violations_);
}

fs::path RunConfig::resolve(const std::string& value) const {
  const fs::path p(value);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

}  // namespace equicascade
