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

// JSON conversions for configuration and statistics records. Field names
// match the C++ member names.

#include <nlohmann/json.hpp>

#include "styleweaver/corpus.hpp"
#include "styleweaver/model.hpp"

namespace styleweaver {

struct TrainConfig;

nlohmann::json corpus_config_to_json(const CorpusGenConfig& config);
CorpusGenConfig corpus_config_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Overlays the keys present in `j` onto `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json stats_to_json(const ProsodyStats& stats);
ProsodyStats stats_from_json(const nlohmann::json& j);

/// Parses a JSON file; ConfigError on I/O or syntax problems.
nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace styleweaver
