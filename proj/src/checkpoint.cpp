// Copyright 2026 The StyleWeaver Authors
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

#include "styleweaver/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "styleweaver/error.hpp"

namespace styleweaver {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'W', 'C', 'K'};

struct Header {
  json manifest;
  std::uint64_t payload_begin = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in) throw FormatError(path.string() + ": truncated checkpoint header");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(path.string() + ": truncated checkpoint manifest");
  Header h;
  try {
    h.manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad manifest: " + e.what());
  }
  h.payload_begin = 4 + sizeof version + sizeof len + len;
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return in;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore& store,
                     const json& metadata) {
  json arrays = json::array();
  std::uint64_t offset = 0;
  std::vector<float> payload;
  for (const ag::Parameter* p : store.all()) {
    arrays.push_back({{"name", p->name},
                      {"shape", {p->value.rows(), p->value.cols()}},
                      {"dtype", "float32"},
                      {"offset", offset}});
    for (ag::Index i = 0; i < p->value.size(); ++i) {
      payload.push_back(static_cast<float>(p->value.data()[i]));
    }
    offset += static_cast<std::uint64_t>(p->value.size());
  }
  const std::string manifest = json{{"metadata", metadata}, {"arrays", arrays}}.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = manifest.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(manifest.data(), static_cast<std::streamsize>(len));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json read_checkpoint_metadata(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_header(in, path).manifest.value("metadata", json::object());
}

json load_checkpoint(const std::filesystem::path& path, nn::ParameterStore& store,
                     bool create_missing) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in, path);
  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t n_floats = (file_size - h.payload_begin) / sizeof(float);
  if ((file_size - h.payload_begin) % sizeof(float) != 0) {
    throw FormatError(path.string() + ": payload is not a whole number of float32 values");
  }
  std::vector<float> payload(n_floats);
  in.seekg(static_cast<std::streamoff>(h.payload_begin));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n_floats * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated payload");

  std::map<std::string, bool> seen;
  std::uint64_t expected = 0;
  try {
    for (const json& a : h.manifest.at("arrays")) {
      const std::string name = a.at("name").get<std::string>();
      const auto rows = a.at("shape").at(0).get<ag::Index>();
      const auto cols = a.at("shape").at(1).get<ag::Index>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      if (a.at("dtype").get<std::string>() != "float32") {
        throw FormatError(path.string() + ": array " + name + " is not float32");
      }
      const std::uint64_t count = static_cast<std::uint64_t>(rows * cols);
      if (offset + count > n_floats) {
        throw FormatError(path.string() + ": array " + name + " runs past the payload");
      }
      expected = std::max(expected, offset + count);
      if (!store.contains(name)) {
        if (!create_missing) continue;
        Rng unused(0);
        store.create(name, rows, cols, nn::Init::kZeros, unused, false);
      }
      ag::Parameter& p = store.get(name);
      if (p.value.rows() != rows || p.value.cols() != cols) {
        throw FormatError(path.string() + ": shape mismatch for " + name);
      }
      for (std::uint64_t i = 0; i < count; ++i) {
        p.value.data()[i] = static_cast<double>(payload[offset + i]);
      }
      seen[name] = true;
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad manifest: " + e.what());
  }
  if (expected != n_floats) throw FormatError(path.string() + ": trailing payload bytes");
  for (const ag::Parameter* p : store.all()) {
    if (!seen.count(p->name)) {
      throw FormatError(path.string() + ": missing array " + p->name);
    }
  }
  return h.manifest.value("metadata", json::object());
}

}  // namespace styleweaver
