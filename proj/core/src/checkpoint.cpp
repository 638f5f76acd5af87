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

#include "equicascade/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "equicascade/error.hpp"

namespace equicascade {
namespace {

constexpr char kMagic[4] = {'E', 'Q', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint: truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw ParseError("checkpoint: missing metadata key '" + key + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = {{"architecture", ckpt.architecture}, {"metadata", ckpt.metadata}};
  const std::string header_text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, Checkpoint::kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    std::size_t count = 1;
    for (auto d : a.dims) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != a.values.size()) throw InvalidArgument("checkpoint: array '" + a.name + "' has inconsistent dims");
    out.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kFormatVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto header_len = r.u32();
  try {
    auto header = nlohmann::json::parse(r.str(header_len));
    ckpt.architecture = header.at("architecture").get<std::string>();
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad header: ") + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u32());
    std::size_t n = 1;
    for (auto& d : a.dims) {
      d = static_cast<std::int32_t>(r.u32());
      n *= static_cast<std::size_t>(d);
    }
    a.values.resize(n);
    std::memcpy(a.values.data(), r.take(n * sizeof(float)), n * sizeof(float));
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

template <typename T>
void store_state(Checkpoint& ckpt, const std::vector<nn::StateEntry<T>>& state, const std::string& prefix) {
  for (const auto& e : state) {
    NamedArray a;
    a.name = prefix + e.name;
    a.dims = {e.tensor->n(), e.tensor->c(), e.tensor->h(), e.tensor->w()};
    a.values.assign(e.tensor->values().begin(), e.tensor->values().end());
    ckpt.arrays.push_back(std::move(a));
  }
}

template <typename T>
void load_state(const Checkpoint& ckpt, const std::vector<nn::StateEntry<T>>& state, const std::string& prefix) {
  for (const auto& e : state) {
    const NamedArray* a = ckpt.find(prefix + e.name);
    if (!a) throw ParseError("checkpoint: missing array '" + prefix + e.name + "'");
    const std::array<std::int32_t, 4> dims = {e.tensor->n(), e.tensor->c(), e.tensor->h(), e.tensor->w()};
    if (a->dims != dims) throw ParseError("checkpoint: shape mismatch for '" + a->name + "'");
    for (std::size_t i = 0; i < a->values.size(); ++i) (*e.tensor)[i] = static_cast<T>(a->values[i]);
  }
}

template void store_state(Checkpoint&, const std::vector<nn::StateEntry<float>>&, const std::string&);
template void store_state(Checkpoint&, const std::vector<nn::StateEntry<double>>&, const std::string&);
template void load_state(const Checkpoint&, const std::vector<nn::StateEntry<float>>&, const std::string&);
template void load_state(const Checkpoint&, const std::vector<nn::StateEntry<double>>&, const std::string&);

}  // namespace equicascade
