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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "equicascade/nn/sequential.hpp"

namespace equicascade {

/// One named float32 array.
struct NamedArray {
  std::string name;
  std::array<std::int32_t, 4> dims{};
  std::vector<float> values;
};

/// Single-file model container shared by detectors and classifiers.
/// The byte layout is documented in docs/checkpoint_format.md.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string architecture;
  std::map<std::string, std::string> metadata;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  /// Throws ParseError when the key is missing.
  const std::string& meta(const std::string& key) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Serialise / deserialise a checkpoint to an in-memory byte string.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

/// Appends the network state to the checkpoint, names prefixed by `prefix`.
template <typename T>
void store_state(Checkpoint& ckpt, const std::vector<nn::StateEntry<T>>& state, const std::string& prefix = "");

/// Copies arrays back into the network state; every entry must be present
/// with a matching shape.
template <typename T>
void load_state(const Checkpoint& ckpt, const std::vector<nn::StateEntry<T>>& state, const std::string& prefix = "");

}  // namespace equicascade
