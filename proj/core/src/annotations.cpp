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

#include "equicascade/annotations.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "equicascade/error.hpp"

namespace equicascade {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<BoxAnnotation> load_box_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open box annotations '" + path.string() + "'");
  const fs::path base = path.parent_path();
  std::vector<BoxAnnotation> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const std::string where = "box annotations row " + std::to_string(row);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": invalid JSON (" + e.what() + ")");
    }
    auto need = [&](const char* field) -> const json& {
      if (!obj.contains(field)) throw ParseError(where + ": missing field '" + field + "'");
      return obj[field];
    };
    auto number = [&](const char* field) {
      const json& v = need(field);
      if (!v.is_number()) throw ParseError(where + ": field '" + std::string(field) + "' is not a number");
      return v.get<double>();
    };
    BoxAnnotation a;
    const json& image = need("image");
    if (!image.is_string()) throw ParseError(where + ": field 'image' is not a string");
    a.image = image.get<std::string>();
    if (!base.empty() && fs::path(a.image).is_relative()) a.image = (base / a.image).lexically_normal().string();
    const json& cls = need("class");
    auto kind = cls.is_string() ? parse_region_kind(cls.get<std::string>()) : std::nullopt;
    if (!kind) throw ParseError(where + ": field 'class' must be face, eye or lower_face");
    a.kind = *kind;
    a.box = {number("x_min"), number("y_min"), number("x_max"), number("y_max")};
    if (!a.box.valid()) throw ParseError(where + ": empty box");
    if (obj.contains("subject_id") && obj["subject_id"].is_string()) a.subject_id = obj["subject_id"].get<std::string>();
    rows.push_back(std::move(a));
  }
  return rows;
}

void write_box_annotations(const fs::path& path, const std::vector<BoxAnnotation>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write box annotations '" + path.string() + "'");
  for (const auto& a : rows) {
    json obj = {{"image", a.image},         {"class", std::string(to_string(a.kind))},
                {"x_min", a.box.x_min},     {"y_min", a.box.y_min},
                {"x_max", a.box.x_max},     {"y_max", a.box.y_max}};
    if (!a.subject_id.empty()) obj["subject_id"] = a.subject_id;
    out << obj.dump() << '\n';
  }
}

}  // namespace equicascade
