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

// Synthetic multi-speaker, multi-style corpus with analytically known
// style -> prosody directions, plus speaker-level prosody standardization.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styleweaver/autograd.hpp"

namespace styleweaver {

struct StyleSpec {
  std::string name;
  double pitch_shift = 0.0;   // semitones per unit strength
  double dur_factor = 0.0;    // log-duration shift per unit strength
  double energy_shift = 0.0;  // additive energy shift per unit strength

  bool operator==(const StyleSpec&) const = default;
};

struct SpeakerProfile {
  int speaker_id = 0;
  double base_log_f0 = 0.0;  // log Hz
  bool labeled = false;
  std::vector<std::string> style_set;

  bool operator==(const SpeakerProfile&) const = default;
};

struct CorpusGenConfig {
  std::vector<StyleSpec> styles;
  std::vector<SpeakerProfile> speakers;
  int utterances_per_speaker = 500;
  int phoneme_inventory = 40;
  int min_phones = 5;
  int max_phones = 20;
  int n_mels = 20;
  double base_duration_mean = 12.0;
  double base_duration_std = 3.0;
  int min_base_duration = 3;
  double strength_min = 0.5;
  double strength_max = 1.5;
  double phone_pitch_sigma = 0.1;   // intrinsic per-phoneme log-F0 offset spread
  double phone_energy_sigma = 0.1;  // intrinsic per-phoneme energy offset spread
  double base_energy = 1.0;
  double f0_jitter = 0.02;
  double energy_jitter = 0.02;
  double f0_min_hz = 60.0;   // maps to mel channel 0
  double f0_max_hz = 400.0;  // maps to mel channel n_mels - 1
  double mel_bump_width = 1.5;
  double mel_noise_floor = 0.01;
  double mel_noise_sigma = 0.005;

  /// Four speakers: two labeled x {neutral, up, down}, two unlabeled with a
  /// single hidden style each.
  static CorpusGenConfig defaults();
  /// Throws ConfigError on structurally invalid configurations.
  void validate() const;
  int style_index(const std::string& name) const;

  bool operator==(const CorpusGenConfig&) const = default;
};

/// Real-audio analysis parameters, kept as metadata only.
struct AnalysisMetadata {
  int sample_rate = 24000;
  int frame_size = 960;
  int hop_size = 240;

  bool operator==(const AnalysisMetadata&) const = default;
};

struct UtteranceRecord {
  std::string utt_id;
  int speaker_id = 0;
  std::optional<int> style_label;  // absent for unlabeled speakers
  double strength = 1.0;
  std::vector<int> phonemes;
  std::vector<int> durations;
  std::vector<float> f0;      // log Hz, per frame
  std::vector<float> energy;  // per frame
  std::vector<float> mel;     // n_frames x n_mels, row-major
  int n_mels = 0;

  int n_frames() const { return static_cast<int>(f0.size()); }
  ag::Mat mel_matrix() const;
  /// Throws ValidationError when length or finiteness invariants fail.
  void validate() const;

  bool operator==(const UtteranceRecord&) const = default;
};

struct Corpus {
  CorpusGenConfig config;
  std::uint64_t seed = 0;
  AnalysisMetadata metadata;
  std::vector<double> phone_pitch_offset;
  std::vector<double> phone_energy_offset;
  std::vector<UtteranceRecord> utterances;

  int n_speakers() const { return static_cast<int>(config.speakers.size()); }
  int n_styles() const { return static_cast<int>(config.styles.size()); }
  const SpeakerProfile& speaker(int id) const;

  bool operator==(const Corpus&) const = default;
};

enum class Split { kTrain, kVal, kTest };

/// hash(utt_id) mod 10: 0-7 train, 8 val, 9 test.
Split split_of(const std::string& utt_id);
Split parse_split(const std::string& name);
std::string split_name(Split split);
std::vector<const UtteranceRecord*> select_split(const Corpus& corpus, Split split);

/// Pre-jitter per-phone targets and realized durations of one utterance.
struct RenderedProsody {
  std::vector<int> durations;
  std::vector<double> pitch_targets;   // log Hz per phone
  std::vector<double> energy_targets;  // per phone
};

/// Applies a style at the given strength to a phoneme sequence.
RenderedProsody render_prosody(const CorpusGenConfig& config, std::span<const double> pitch_offset,
                               std::span<const double> energy_offset,
                               const SpeakerProfile& speaker, const StyleSpec& style,
                               double strength, std::span<const int> phonemes,
                               std::span<const int> base_durations);

/// Piecewise-linear interpolation between per-phone targets anchored at phone
/// centers, held constant before the first and after the last center.
std::vector<double> interpolate_frames(std::span<const double> targets,
                                       std::span<const int> durations);

Corpus generate_corpus(const CorpusGenConfig& config, std::uint64_t seed);

// ---- speaker-level standardization --------------------------------------

enum class FeatureKind { kPitch, kEnergy, kLogDuration };

struct MomentPair {
  double mean = 0.0;
  double std = 1.0;

  bool operator==(const MomentPair&) const = default;
};

struct SpeakerStats {
  MomentPair pitch;
  MomentPair energy;
  MomentPair log_duration;

  const MomentPair& get(FeatureKind kind) const;
  bool operator==(const SpeakerStats&) const = default;
};

struct ProsodyStats {
  static constexpr double kStdFloor = 1e-5;
  std::map<int, SpeakerStats> speakers;

  const SpeakerStats& at(int speaker_id) const;
  bool operator==(const ProsodyStats&) const = default;
};

/// Population statistics per speaker over the utterances in `split`.
ProsodyStats compute_speaker_stats(const Corpus& corpus, Split split);
ProsodyStats compute_speaker_stats(std::span<const UtteranceRecord* const> utterances,
                                   int n_speakers);

std::vector<double> standardize(std::span<const double> features, int speaker_id,
                                const ProsodyStats& stats, FeatureKind kind);
std::vector<double> destandardize(std::span<const double> features, int speaker_id,
                                  const ProsodyStats& stats, FeatureKind kind);

/// Standardized supervision targets of one utterance.
struct ProsodyTargets {
  ag::Mat frame;  // T x 2 (pitch, energy)
  ag::Mat phone;  // N_p x 3 (pitch, energy, log-duration)
};

ProsodyTargets make_prosody_targets(const UtteranceRecord& utt, const ProsodyStats& stats);

// ---- persistence ---------------------------------------------------------

/// Writes corpus.json, manifest.jsonl and one little-endian "SWF1" feature
/// file per utterance under dir/features/.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

void write_feature_file(const std::filesystem::path& path, std::span<const float> f0,
                        std::span<const float> energy, std::span<const float> mel, int n_mels);

struct FeatureFile {
  std::vector<float> f0;
  std::vector<float> energy;
  std::vector<float> mel;
  int n_frames = 0;
  int n_mels = 0;
};

FeatureFile read_feature_file(const std::filesystem::path& path);

}  // namespace styleweaver
