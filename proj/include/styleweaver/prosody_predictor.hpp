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

// Hierarchical prosody predictor: a phone-level predictor conditioned on
// source speaker and style embedding, refined by a frame-level predictor
// whose outputs are averaged back to phone level.

#include <span>
#include <vector>

#include "styleweaver/corpus.hpp"
#include "styleweaver/nn.hpp"

namespace styleweaver {

using ag::Mat;
using ag::Tape;
using ag::Var;

struct PredictorConfig {
  int n_phonemes = 40;
  int n_speakers = 4;
  int phone_dim = 32;
  int speaker_dim = 16;
  int style_dim = 64;
  int channels = 64;
  int kernel = 3;
  // Frame-level predictor. A wider kernel lets frames deep inside a long
  // phone see its neighbours.
  int frame_channels = 64;
  int frame_kernel = 3;
  /// false selects the single-level ablation (no frame-level predictor).
  bool hierarchical = true;

  void validate() const;
};

/// Column layout of phone-level prosody matrices.
enum PhoneColumn : int { kPitchCol = 0, kEnergyCol = 1, kLogDurationCol = 2 };

struct PredictorOutput {
  Var phone;        // N_p x 3 from the phone-level predictor
  Var frame;        // T x 2; invalid in single-level mode
  Var final_phone;  // N_p x 2 pitch/energy handed to the acoustic model
};

/// Repeats row i durations[i] times.
Mat length_regulate(const Mat& phone_feats, std::span<const int> durations);
Var length_regulate(const Var& phone_feats, std::span<const int> durations);
/// Per-phone mean over each phone's frame span.
Mat downsample_phone_mean(const Mat& frame_feats, std::span<const int> durations);
Var downsample_phone_mean(const Var& frame_feats, std::span<const int> durations);

/// Standardized log-durations -> frames: max(1, round(exp(x * std + mean))).
std::vector<int> realize_durations(std::span<const double> standardized_log_durations,
                                   int speaker_id, const ProsodyStats& stats);

class ProsodyPredictor {
 public:
  ProsodyPredictor() = default;
  ProsodyPredictor(nn::ParameterStore& store, const PredictorConfig& config, Rng& rng);

  Var phone_embeddings(Tape& t, std::span<const int> phonemes) const;
  Var speaker_embedding(Tape& t, int speaker_id) const;

  /// phone_embs: N_p x phone_dim; speaker: 1 x speaker_dim; style: 1 x style_dim.
  Var predict_phone(Tape& t, const Var& phone_embs, const Var& speaker, const Var& style) const;
  /// expanded: T x (2 + phone_dim).
  Var predict_frame(Tape& t, const Var& expanded) const;

  /// Full pass. `durations` drive the length regulator (ground truth while
  /// training, realized predictions at inference).
  PredictorOutput forward(Tape& t, std::span<const int> phonemes, int source_speaker,
                          const Var& style, std::span<const int> durations) const;

  const PredictorConfig& config() const { return config_; }
  bool hierarchical() const { return config_.hierarchical; }

 private:
  PredictorConfig config_;
  nn::Embedding phones_;
  nn::Embedding speakers_;
  nn::Conv1d phone_conv1_, phone_conv2_;
  nn::Linear phone_out_;
  nn::Conv1d frame_conv1_, frame_conv2_;
  nn::Linear frame_out_;
};

struct ProsodyLoss {
  Var total;
  Var phone;  // pitch + energy + log-duration MSE at phone level
  Var frame;  // pitch + energy MSE at frame level; constant 0 when single-level
};

/// Sum of per-feature MSE terms. The phone term always supervises the
/// phone-level predictor directly; the frame term exists only in
/// hierarchical mode.
ProsodyLoss prosody_loss(Tape& t, const PredictorOutput& pred, const ProsodyTargets& targets,
                         bool hierarchical);
ProsodyLoss prosody_loss(Tape& t, const PredictorOutput& pred, const UtteranceRecord& gt,
                         const ProsodyStats& stats, bool hierarchical);

}  // namespace styleweaver
