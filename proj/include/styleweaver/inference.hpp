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

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleweaver/corpus.hpp"
#include "styleweaver/model.hpp"

namespace styleweaver {

struct StyleCentroid {
  std::string style;
  Mat embedding;  // 1 x D mean of posterior means
  int count = 0;
};

using CentroidMap = std::map<std::string, StyleCentroid>;

/// Mean posterior mean per labeled style. Throws MissingDataError when a
/// style has no labeled utterance in the input set.
CentroidMap compute_centroids(const StyleWeaverModel& model,
                              std::span<const UtteranceRecord* const> utterances,
                              const CorpusGenConfig& corpus_config);
CentroidMap compute_centroids(const StyleWeaverModel& model, const Corpus& corpus);

nlohmann::json centroids_to_json(const CentroidMap& centroids);
CentroidMap centroids_from_json(const nlohmann::json& j);

/// s * embedding; s <= 0 is a ValidationError.
Mat scale_style(const Mat& embedding, double s);

inline constexpr double kMaxStyleScale = 4.0;

struct TransferRequest {
  std::vector<int> phonemes;
  int source_speaker = 0;
  int target_speaker = 0;
  std::string style;
  double scale = 1.0;
  /// Pre-net dropout stays on at inference unless disabled for exact
  /// determinism.
  bool dropout = true;
  std::uint64_t dropout_seed = 0;
  /// Skip the acoustic decoder when only prosody is needed.
  bool decode = true;
  /// 0 uses the decoder's configured cap.
  int max_frames = 0;
};

struct TransferResult {
  Mat mel;                     // frames x n_mels (empty when decode is off)
  Mat phone_prosody;           // N_p x 2 standardized pitch/energy fed to the decoder
  Mat frame_prosody;           // sum(durations) x 2 standardized; empty when single-level
  std::vector<int> durations;  // realized, source-speaker frames
  std::vector<double> pitch;   // per phone, log Hz (source speaker scale)
  std::vector<double> energy;  // per phone
  bool truncated = false;
};

TransferResult transfer(const TransferRequest& request, const StyleWeaverModel& model,
                        const CentroidMap& centroids, const ProsodyStats& stats);

}  // namespace styleweaver
