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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleweaver/corpus.hpp"
#include "styleweaver/inference.hpp"
#include "styleweaver/model.hpp"

namespace styleweaver {

/// Sample Pearson coefficient. Constant input gives 0; fewer than two
/// points is a ValidationError.
double pearson(std::span<const double> x, std::span<const double> y);

struct UtteranceProsodyScore {
  std::string utt_id;
  double f0 = 0.0;
  double energy = 0.0;
  double duration = 0.0;
};

struct ProsodyReport {
  double f0 = 0.0;
  double energy = 0.0;
  double duration = 0.0;
  std::vector<UtteranceProsodyScore> per_utterance;
};

/// Phone-level predictions for one utterance, conditioned on its own
/// speaker and its posterior mean, expanded with ground-truth durations.
struct PhonePrediction {
  std::vector<double> pitch, energy;  // standardized
  std::vector<double> duration;       // realized frames
};
PhonePrediction predict_utterance_prosody(const StyleWeaverModel& model,
                                          const UtteranceRecord& utt, const ProsodyStats& stats);

UtteranceProsodyScore score_utterance(const PhonePrediction& pred, const UtteranceRecord& utt,
                                      const ProsodyStats& stats);

ProsodyReport prosody_report(const StyleWeaverModel& model,
                             std::span<const UtteranceRecord* const> utterances,
                             const ProsodyStats& stats);
nlohmann::json to_json(const ProsodyReport& report, bool per_utterance = true);

struct StyleStrength {
  std::string style;
  int source_speaker = 0;
  int target_speaker = 0;
  bool pitch_checked = false;
  bool duration_checked = false;
  int sentences = 0;
  int correct = 0;
  double accuracy = 0.0;
};

struct StrengthReport {
  std::vector<double> scales;
  std::vector<StyleStrength> styles;  // styles with a non-zero pitch or duration direction

  const StyleStrength& at(const std::string& style) const;
};

/// Labeled speaker that owns the style; throws LookupError if none.
int style_owner(const CorpusGenConfig& config, const std::string& style);
/// First unlabeled speaker other than `source`, else any other speaker.
int default_target(const CorpusGenConfig& config, int source);

StrengthReport strength_report(const StyleWeaverModel& model, const CentroidMap& centroids,
                               const ProsodyStats& stats, const CorpusGenConfig& corpus_config,
                               std::span<const std::vector<int>> sentences,
                               std::span<const double> scales);
nlohmann::json to_json(const StrengthReport& report);

struct ProbeResult {
  double speaker_accuracy = 0.0;
  double style_accuracy = 0.0;
  int speaker_train = 0, speaker_test = 0;
  int style_train = 0, style_test = 0;
  double speaker_chance = 0.0;
  double style_chance = 0.0;
};

struct ProbeConfig {
  int epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

/// Softmax regression on z-scored features, trained full-batch from zeros
/// (deterministic). `in_train` selects the probe-train rows.
double linear_probe(const Mat& features, std::span<const int> labels, int classes,
                    std::span<const bool> in_train, const ProbeConfig& config = {});

ProbeResult probe_classifiers(const Mat& embeddings, std::span<const int> speakers,
                              std::span<const std::optional<int>> styles, int n_speakers,
                              int n_styles, std::span<const bool> in_train,
                              const ProbeConfig& config = {});

/// Probes over posterior means of the held-out (val + test) utterances.
ProbeResult probe_model(const StyleWeaverModel& model, const Corpus& corpus,
                        const ProbeConfig& config = {});
nlohmann::json to_json(const ProbeResult& result);

struct TrajectoryRow {
  int phone_index = 0;
  double scale = 0.0;
  double pitch = 0.0;
  double energy = 0.0;
  int duration = 0;
};

std::vector<TrajectoryRow> strength_trajectories(const StyleWeaverModel& model,
                                                 const CentroidMap& centroids,
                                                 const ProsodyStats& stats,
                                                 const CorpusGenConfig& corpus_config,
                                                 std::span<const int> phonemes,
                                                 const std::string& style,
                                                 std::span<const double> scales);
void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows);
std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path);

}  // namespace styleweaver
