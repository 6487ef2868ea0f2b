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

#include "styleweaver/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "styleweaver/error.hpp"
#include "styleweaver/random.hpp"

namespace styleweaver {

CorpusGenConfig CorpusGenConfig::defaults() {
  CorpusGenConfig c;
  c.styles = {
      {"neutral", 0.0, 0.0, 0.0},
      {"up", 2.0, -0.3, 0.2},
      {"down", -2.0, 0.3, -0.2},
  };
  c.speakers = {
      {0, std::log(190.0), true, {"neutral", "up", "down"}},
      {1, std::log(125.0), true, {"neutral", "up", "down"}},
      {2, std::log(210.0), false, {"neutral"}},
      {3, std::log(110.0), false, {"up"}},
  };
  return c;
}

int CorpusGenConfig::style_index(const std::string& name) const {
  for (std::size_t i = 0; i < styles.size(); ++i) {
    if (styles[i].name == name) return static_cast<int>(i);
  }
  throw LookupError("unknown style: " + name);
}

void CorpusGenConfig::validate() const {
  if (styles.empty()) throw ConfigError("corpus config: no styles");
  if (speakers.empty()) throw ConfigError("corpus config: no speakers");
  std::set<std::string> names;
  bool has_up = false, has_down = false;
  for (const StyleSpec& s : styles) {
    if (!names.insert(s.name).second) throw ConfigError("corpus config: duplicate style " + s.name);
    has_up = has_up || (s.pitch_shift > 0 && s.dur_factor < 0);
    has_down = has_down || (s.pitch_shift < 0 && s.dur_factor > 0);
  }
  if (!has_up || !has_down) {
    throw ConfigError("corpus config: need at least one up-type and one down-type style");
  }
  int labeled = 0, unlabeled = 0;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const SpeakerProfile& sp = speakers[i];
    if (sp.speaker_id != static_cast<int>(i)) {
      throw ConfigError("corpus config: speaker ids must be dense and ordered");
    }
    for (const std::string& st : sp.style_set) {
      if (!names.count(st)) throw ConfigError("corpus config: speaker uses unknown style " + st);
    }
    if (sp.labeled) {
      if (sp.style_set.size() < 2) {
        throw ConfigError("corpus config: labeled speakers need at least two styles");
      }
      ++labeled;
    } else {
      if (sp.style_set.size() != 1) {
        throw ConfigError("corpus config: unlabeled speakers have exactly one hidden style");
      }
      ++unlabeled;
    }
  }
  if (labeled < 2 || unlabeled < 2) {
    throw ConfigError("corpus config: need >= 2 labeled and >= 2 unlabeled speakers");
  }
  if (utterances_per_speaker < 1) throw ConfigError("corpus config: utterances_per_speaker < 1");
  if (phoneme_inventory < 1) throw ConfigError("corpus config: empty phoneme inventory");
  if (min_phones < 1 || max_phones < min_phones) {
    throw ConfigError("corpus config: invalid phone count range");
  }
  if (n_mels < 2) throw ConfigError("corpus config: n_mels must be >= 2");
  if (min_base_duration < 1) throw ConfigError("corpus config: min_base_duration < 1");
  if (strength_min < 0.0 || strength_max < strength_min) {
    throw ConfigError("corpus config: invalid strength range");
  }
  if (!(f0_max_hz > f0_min_hz && f0_min_hz > 0.0)) {
    throw ConfigError("corpus config: invalid f0 channel range");
  }
}

ag::Mat UtteranceRecord::mel_matrix() const {
  ag::Mat m(n_frames(), n_mels);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = mel[static_cast<std::size_t>(i)];
  return m;
}

void UtteranceRecord::validate() const {
  if (phonemes.empty()) throw ValidationError(utt_id + ": no phonemes");
  if (durations.size() != phonemes.size()) {
    throw ValidationError(utt_id + ": durations/phonemes length mismatch");
  }
  long total = 0;
  for (int d : durations) {
    if (d < 1) throw ValidationError(utt_id + ": duration < 1");
    total += d;
  }
  if (static_cast<long>(f0.size()) != total || energy.size() != f0.size() ||
      mel.size() != f0.size() * static_cast<std::size_t>(n_mels)) {
    throw ValidationError(utt_id + ": frame counts disagree with sum of durations");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(f0.begin(), f0.end(), finite) ||
      !std::all_of(energy.begin(), energy.end(), finite) ||
      !std::all_of(mel.begin(), mel.end(), finite)) {
    throw ValidationError(utt_id + ": non-finite feature");
  }
}

const SpeakerProfile& Corpus::speaker(int id) const {
  if (id < 0 || id >= n_speakers()) throw LookupError("unknown speaker " + std::to_string(id));
  return config.speakers[static_cast<std::size_t>(id)];
}

Split split_of(const std::string& utt_id) {
  const auto bucket = fnv1a(utt_id) % 10;
  if (bucket < 8) return Split::kTrain;
  return bucket == 8 ? Split::kVal : Split::kTest;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split: " + name);
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

std::vector<const UtteranceRecord*> select_split(const Corpus& corpus, Split split) {
  std::vector<const UtteranceRecord*> out;
  for (const UtteranceRecord& u : corpus.utterances) {
    if (split_of(u.utt_id) == split) out.push_back(&u);
  }
  return out;
}

RenderedProsody render_prosody(const CorpusGenConfig& config, std::span<const double> pitch_offset,
                               std::span<const double> energy_offset,
                               const SpeakerProfile& speaker, const StyleSpec& style,
                               double strength, std::span<const int> phonemes,
                               std::span<const int> base_durations) {
  if (phonemes.size() != base_durations.size()) {
    throw ShapeError("render_prosody: phonemes/base_durations length mismatch");
  }
  RenderedProsody r;
  const double semitone = std::numbers::ln2 / 12.0;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const auto ph = static_cast<std::size_t>(phonemes[i]);
    r.pitch_targets.push_back(speaker.base_log_f0 + pitch_offset[ph] +
                              strength * style.pitch_shift * semitone);
    r.energy_targets.push_back(config.base_energy + energy_offset[ph] +
                               strength * style.energy_shift);
    const double log_dur = std::log(static_cast<double>(base_durations[i])) +
                           strength * style.dur_factor;
    r.durations.push_back(std::max(1, static_cast<int>(std::lround(std::exp(log_dur)))));
  }
  return r;
}

std::vector<double> interpolate_frames(std::span<const double> targets,
                                       std::span<const int> durations) {
  std::vector<double> centers;
  int total = 0;
  for (int d : durations) {
    centers.push_back(total + 0.5 * d);
    total += d;
  }
  std::vector<double> out(static_cast<std::size_t>(total));
  std::size_t seg = 0;
  for (int t = 0; t < total; ++t) {
    const double x = t + 0.5;
    if (x <= centers.front()) {
      out[static_cast<std::size_t>(t)] = targets.front();
      continue;
    }
    if (x >= centers.back()) {
      out[static_cast<std::size_t>(t)] = targets.back();
      continue;
    }
    while (centers[seg + 1] < x) ++seg;
    const double w = (x - centers[seg]) / (centers[seg + 1] - centers[seg]);
    out[static_cast<std::size_t>(t)] = (1.0 - w) * targets[seg] + w * targets[seg + 1];
  }
  return out;
}

namespace {

constexpr std::uint64_t kOffsetStream = 0x5eedull;

UtteranceRecord make_utterance(const Corpus& corpus, int speaker_id, int index,
                               std::uint64_t sub_seed) {
  const CorpusGenConfig& cfg = corpus.config;
  const SpeakerProfile& sp = cfg.speakers[static_cast<std::size_t>(speaker_id)];
  Rng rng(sub_seed);

  UtteranceRecord u;
  char id[32];
  std::snprintf(id, sizeof(id), "spk%d_%04d", speaker_id, index);
  u.utt_id = id;
  u.speaker_id = speaker_id;
  u.n_mels = cfg.n_mels;

  const auto n_phones = static_cast<int>(rng.uniform_int(cfg.min_phones, cfg.max_phones));
  std::vector<int> base_durations;
  for (int i = 0; i < n_phones; ++i) {
    u.phonemes.push_back(static_cast<int>(rng.uniform_int(0, cfg.phoneme_inventory - 1)));
    const double d = std::round(rng.normal(cfg.base_duration_mean, cfg.base_duration_std));
    base_durations.push_back(std::max(cfg.min_base_duration, static_cast<int>(d)));
  }
  const std::string& style_name =
      sp.labeled ? sp.style_set[static_cast<std::size_t>(
                       rng.uniform_int(0, static_cast<std::int64_t>(sp.style_set.size()) - 1))]
                 : sp.style_set.front();
  const int style = cfg.style_index(style_name);
  if (sp.labeled) u.style_label = style;
  u.strength = rng.uniform(cfg.strength_min, cfg.strength_max);

  const RenderedProsody r =
      render_prosody(cfg, corpus.phone_pitch_offset, corpus.phone_energy_offset, sp,
                     cfg.styles[static_cast<std::size_t>(style)], u.strength, u.phonemes,
                     base_durations);
  u.durations = r.durations;
  const std::vector<double> f0 = interpolate_frames(r.pitch_targets, r.durations);
  const std::vector<double> energy = interpolate_frames(r.energy_targets, r.durations);

  const double lo = std::log(cfg.f0_min_hz), hi = std::log(cfg.f0_max_hz);
  const double inv_two_w2 = 1.0 / (2.0 * cfg.mel_bump_width * cfg.mel_bump_width);
  for (std::size_t t = 0; t < f0.size(); ++t) {
    const auto f = static_cast<float>(f0[t] + rng.normal(0.0, cfg.f0_jitter));
    const auto e = static_cast<float>(energy[t] + rng.normal(0.0, cfg.energy_jitter));
    u.f0.push_back(f);
    u.energy.push_back(e);
    const double center = (cfg.n_mels - 1) * (f - lo) / (hi - lo);
    for (int c = 0; c < cfg.n_mels; ++c) {
      const double bump = e * std::exp(-(c - center) * (c - center) * inv_two_w2);
      u.mel.push_back(static_cast<float>(bump + cfg.mel_noise_floor +
                                         rng.normal(0.0, cfg.mel_noise_sigma)));
    }
  }
  return u;
}

}  // namespace

Corpus generate_corpus(const CorpusGenConfig& config, std::uint64_t seed) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  corpus.seed = seed;
  Rng offsets(mix_seed(seed, kOffsetStream));
  for (int p = 0; p < config.phoneme_inventory; ++p) {
    corpus.phone_pitch_offset.push_back(offsets.normal(0.0, config.phone_pitch_sigma));
    corpus.phone_energy_offset.push_back(offsets.normal(0.0, config.phone_energy_sigma));
  }
  std::uint64_t utt_index = 0;
  for (const SpeakerProfile& sp : config.speakers) {
    for (int i = 0; i < config.utterances_per_speaker; ++i, ++utt_index) {
      corpus.utterances.push_back(
          make_utterance(corpus, sp.speaker_id, i, mix_seed(seed, utt_index)));
    }
  }
  return corpus;
}

const MomentPair& SpeakerStats::get(FeatureKind kind) const {
  switch (kind) {
    case FeatureKind::kPitch:
      return pitch;
    case FeatureKind::kEnergy:
      return energy;
    case FeatureKind::kLogDuration:
      return log_duration;
  }
  return pitch;
}

const SpeakerStats& ProsodyStats::at(int speaker_id) const {
  auto it = speakers.find(speaker_id);
  if (it == speakers.end()) {
    throw LookupError("no prosody statistics for speaker " + std::to_string(speaker_id));
  }
  return it->second;
}

namespace {

MomentPair finish(const std::vector<double>& values) {
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - m) * (v - m);
  var /= static_cast<double>(values.size());
  return {m, std::max(std::sqrt(var), ProsodyStats::kStdFloor)};
}

}  // namespace

ProsodyStats compute_speaker_stats(std::span<const UtteranceRecord* const> utterances,
                                   int n_speakers) {
  struct Values {
    std::vector<double> pitch, energy, log_dur;
  };
  std::vector<Values> per(static_cast<std::size_t>(n_speakers));
  for (const UtteranceRecord* u : utterances) {
    if (u->speaker_id < 0 || u->speaker_id >= n_speakers) {
      throw LookupError(u->utt_id + ": speaker id out of range");
    }
    Values& v = per[static_cast<std::size_t>(u->speaker_id)];
    v.pitch.insert(v.pitch.end(), u->f0.begin(), u->f0.end());
    v.energy.insert(v.energy.end(), u->energy.begin(), u->energy.end());
    for (int d : u->durations) v.log_dur.push_back(std::log(static_cast<double>(d)));
  }
  ProsodyStats stats;
  for (int s = 0; s < n_speakers; ++s) {
    const Values& v = per[static_cast<std::size_t>(s)];
    if (v.pitch.empty()) {
      throw MissingDataError("speaker " + std::to_string(s) + " has no utterances in split");
    }
    stats.speakers[s] = SpeakerStats{finish(v.pitch), finish(v.energy), finish(v.log_dur)};
  }
  return stats;
}

ProsodyStats compute_speaker_stats(const Corpus& corpus, Split split) {
  const auto utts = select_split(corpus, split);
  return compute_speaker_stats(utts, corpus.n_speakers());
}

std::vector<double> standardize(std::span<const double> features, int speaker_id,
                                const ProsodyStats& stats, FeatureKind kind) {
  const MomentPair& m = stats.at(speaker_id).get(kind);
  std::vector<double> out;
  out.reserve(features.size());
  for (double x : features) out.push_back((x - m.mean) / m.std);
  return out;
}

std::vector<double> destandardize(std::span<const double> features, int speaker_id,
                                  const ProsodyStats& stats, FeatureKind kind) {
  const MomentPair& m = stats.at(speaker_id).get(kind);
  std::vector<double> out;
  out.reserve(features.size());
  for (double x : features) out.push_back(x * m.std + m.mean);
  return out;
}

ProsodyTargets make_prosody_targets(const UtteranceRecord& utt, const ProsodyStats& stats) {
  const SpeakerStats& s = stats.at(utt.speaker_id);
  const auto T = static_cast<ag::Index>(utt.f0.size());
  const auto n = static_cast<ag::Index>(utt.durations.size());
  ProsodyTargets out;
  out.frame.resize(T, 2);
  for (ag::Index t = 0; t < T; ++t) {
    out.frame(t, 0) = (utt.f0[static_cast<std::size_t>(t)] - s.pitch.mean) / s.pitch.std;
    out.frame(t, 1) = (utt.energy[static_cast<std::size_t>(t)] - s.energy.mean) / s.energy.std;
  }
  out.phone.resize(n, 3);
  ag::Index off = 0;
  for (ag::Index i = 0; i < n; ++i) {
    const int d = utt.durations[static_cast<std::size_t>(i)];
    out.phone(i, 0) = out.frame.block(off, 0, d, 1).mean();
    out.phone(i, 1) = out.frame.block(off, 1, d, 1).mean();
    out.phone(i, 2) = (std::log(static_cast<double>(d)) - s.log_duration.mean) /
                      s.log_duration.std;
    off += d;
  }
  return out;
}

}  // namespace styleweaver
