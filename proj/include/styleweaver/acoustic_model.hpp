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

// Attention-based sequence-to-sequence acoustic model: phoneme encoder with
// per-position speaker / style / prosody conditioning, and an
// autoregressive recurrent decoder with dot-product attention.

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "styleweaver/nn.hpp"

namespace styleweaver {

using ag::Mat;
using ag::Tape;
using ag::Var;

struct DecoderConfig {
  int hidden = 128;
  int prenet_dim = 64;
  double prenet_dropout = 0.5;
  int attention_dim = 64;
  std::string attention = "dot";
  int max_decode_frames = 1000;
  int frames_per_step = 1;

  void validate() const;
};

struct AcousticConfig {
  int n_phonemes = 40;
  int n_speakers = 4;
  int n_mels = 20;
  int phone_dim = 32;
  int speaker_dim = 16;
  int style_dim = 64;
  int encoder_dim = 64;
  DecoderConfig decoder;

  void validate() const;
  int memory_dim() const { return encoder_dim + speaker_dim + style_dim + 2; }
};

struct DecodeOptions {
  /// Seed for pre-net dropout masks; identical seeds give identical masks.
  std::uint64_t dropout_seed = 0;
  /// false disables pre-net dropout (deterministic inference).
  bool dropout = true;
  /// Optional override of the stop logit at a (0-based) decoder step.
  std::function<double(int step, double logit)> stop_hook;
};

struct DecodeResult {
  Var mel;          // frames x n_mels
  Var stop_logits;  // steps x 1
  Mat alignments;   // frames x N_p, rows sum to 1
  int steps = 0;
  bool truncated = false;
};

/// Per-step stop targets: 1 on the step that emits the final frame.
Mat stop_targets(int frames, int frames_per_step);

/// Mean L1 over mel elements + mean BCE on stop logits.
Var reconstruction_loss(const Var& mel_pred, const Var& mel_gt, const Var& stop_logits,
                        const Mat& stop_gt);

class AcousticModel {
 public:
  AcousticModel() = default;
  AcousticModel(nn::ParameterStore& store, const AcousticConfig& config, Rng& rng);

  Var speaker_embedding(Tape& t, int speaker_id) const;

  /// Memory of shape N_p x memory_dim.
  Var encode_text(Tape& t, std::span<const int> phonemes, const Var& target_speaker_emb,
                  const Var& style, const Var& phone_prosody) const;

  /// Step t consumes ground-truth frame t-1 (zeros at t = 0).
  DecodeResult decode_teacher_forced(Tape& t, const Var& memory, const Var& mel_gt,
                                     const DecodeOptions& options) const;

  /// Feeds back its own predictions until the stop probability exceeds 0.5
  /// or max_frames frames have been produced.
  DecodeResult decode_free(Tape& t, const Var& memory, int max_frames,
                           const DecodeOptions& options) const;

  const AcousticConfig& config() const { return config_; }

 private:
  struct StepState {
    Var h;
    Var context;
  };

  Mat dropout_mask(Rng& rng, ag::Index cols) const;
  /// One decoder step; returns output frames (r x n_mels) and the stop logit.
  std::pair<Var, Var> step(Tape& t, const Var& memory, const Var& keys_t, const Var& prev_frame,
                           StepState& state, Rng* dropout_rng, Mat& alignment) const;

  AcousticConfig config_;
  nn::Embedding phones_;
  nn::Embedding speakers_;
  nn::Conv1d enc_conv_;
  nn::Gru enc_rnn_;
  nn::Linear prenet1_, prenet2_;
  nn::Gru dec_rnn_;
  nn::Linear key_proj_, query_proj_;
  nn::Linear frame_out_, stop_out_;
};

}  // namespace styleweaver
