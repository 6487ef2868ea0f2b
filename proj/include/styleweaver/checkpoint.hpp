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

#pragma once

// Single-file checkpoint container:
//   "SWCK" | u32 version | u64 manifest bytes | manifest JSON | payload
// The manifest lists every named array (name, shape, dtype, byte offset into
// the payload) plus free-form metadata. Payloads are little-endian float32.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "styleweaver/nn.hpp"

namespace styleweaver {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore& store,
                     const nlohmann::json& metadata);

/// Reads only the metadata block.
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& path);

/// Restores every array present in the store. Arrays absent from the store
/// are created as buffers when `create_missing` is set, otherwise ignored.
/// Missing store entries (other than optimizer state) are a format error.
nlohmann::json load_checkpoint(const std::filesystem::path& path, nn::ParameterStore& store,
                               bool create_missing = false);

}  // namespace styleweaver
