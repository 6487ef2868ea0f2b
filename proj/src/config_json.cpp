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

#include "styleweaver/config_json.hpp"

#include <fstream>

#include "styleweaver/error.hpp"
#include "styleweaver/training.hpp"

namespace styleweaver {

using nlohmann::json;

namespace {

template <typename T>
void overlay(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

json corpus_config_to_json(const CorpusGenConfig& c) {
  json styles = json::array();
  for (const StyleSpec& s : c.styles) {
    styles.push_back({{"name", s.name},
                      {"pitch_shift", s.pitch_shift},
                      {"dur_factor", s.dur_factor},
                      {"energy_shift", s.energy_shift}});
  }
  json speakers = json::array();
  for (const SpeakerProfile& s : c.speakers) {
    speakers.push_back({{"speaker_id", s.speaker_id},
                        {"base_log_f0", s.base_log_f0},
                        {"labeled", s.labeled},
                        {"style_set", s.style_set}});
  }
  return json{{"styles", styles},
              {"speakers", speakers},
              {"utterances_per_speaker", c.utterances_per_speaker},
              {"phoneme_inventory", c.phoneme_inventory},
              {"min_phones", c.min_phones},
              {"max_phones", c.max_phones},
              {"n_mels", c.n_mels},
              {"base_duration_mean", c.base_duration_mean},
              {"base_duration_std", c.base_duration_std},
              {"min_base_duration", c.min_base_duration},
              {"strength_min", c.strength_min},
              {"strength_max", c.strength_max},
              {"phone_pitch_sigma", c.phone_pitch_sigma},
              {"phone_energy_sigma", c.phone_energy_sigma},
              {"base_energy", c.base_energy},
              {"f0_jitter", c.f0_jitter},
              {"energy_jitter", c.energy_jitter},
              {"f0_min_hz", c.f0_min_hz},
              {"f0_max_hz", c.f0_max_hz},
              {"mel_bump_width", c.mel_bump_width},
              {"mel_noise_floor", c.mel_noise_floor},
              {"mel_noise_sigma", c.mel_noise_sigma}};
}

CorpusGenConfig corpus_config_from_json(const json& j) {
  CorpusGenConfig c = CorpusGenConfig::defaults();
  try {
    overlay(j, "utterances_per_speaker", c.utterances_per_speaker);
    overlay(j, "phoneme_inventory", c.phoneme_inventory);
    overlay(j, "min_phones", c.min_phones);
    overlay(j, "max_phones", c.max_phones);
    overlay(j, "n_mels", c.n_mels);
    overlay(j, "base_duration_mean", c.base_duration_mean);
    overlay(j, "base_duration_std", c.base_duration_std);
    overlay(j, "min_base_duration", c.min_base_duration);
    overlay(j, "strength_min", c.strength_min);
    overlay(j, "strength_max", c.strength_max);
    overlay(j, "phone_pitch_sigma", c.phone_pitch_sigma);
    overlay(j, "phone_energy_sigma", c.phone_energy_sigma);
    overlay(j, "base_energy", c.base_energy);
    overlay(j, "f0_jitter", c.f0_jitter);
    overlay(j, "energy_jitter", c.energy_jitter);
    overlay(j, "f0_min_hz", c.f0_min_hz);
    overlay(j, "f0_max_hz", c.f0_max_hz);
    overlay(j, "mel_bump_width", c.mel_bump_width);
    overlay(j, "mel_noise_floor", c.mel_noise_floor);
    overlay(j, "mel_noise_sigma", c.mel_noise_sigma);
    if (j.contains("styles")) {
      c.styles.clear();
      for (const json& s : j.at("styles")) {
        c.styles.push_back({s.at("name").get<std::string>(), s.value("pitch_shift", 0.0),
                            s.value("dur_factor", 0.0), s.value("energy_shift", 0.0)});
      }
    }
    if (j.contains("speakers")) {
      c.speakers.clear();
      for (const json& s : j.at("speakers")) {
        c.speakers.push_back({s.at("speaker_id").get<int>(), s.at("base_log_f0").get<double>(),
                              s.at("labeled").get<bool>(),
                              s.at("style_set").get<std::vector<std::string>>()});
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus config: ") + e.what());
  }
  return c;
}

json model_config_to_json(const ModelConfig& c) {
  const DecoderConfig& d = c.acoustic.decoder;
  return json{{"ref_channels", c.reference.channels},
              {"ref_kernel", c.reference.kernel},
              {"ref_stride", c.reference.stride},
              {"se_reduction", c.reference.se_reduction},
              {"summarizer_hidden", c.reference.summarizer_hidden},
              {"embedding_dim", c.reference.embedding_dim},
              {"n_phonemes", c.predictor.n_phonemes},
              {"n_speakers", c.predictor.n_speakers},
              {"n_styles", c.n_styles},
              {"n_mels", c.acoustic.n_mels},
              {"phone_dim", c.predictor.phone_dim},
              {"speaker_dim", c.predictor.speaker_dim},
              {"predictor_channels", c.predictor.channels},
              {"predictor_kernel", c.predictor.kernel},
              {"predictor_frame_channels", c.predictor.frame_channels},
              {"predictor_frame_kernel", c.predictor.frame_kernel},
              {"hierarchical", c.predictor.hierarchical},
              {"acoustic_phone_dim", c.acoustic.phone_dim},
              {"acoustic_speaker_dim", c.acoustic.speaker_dim},
              {"encoder_dim", c.acoustic.encoder_dim},
              {"decoder_hidden", d.hidden},
              {"prenet_dim", d.prenet_dim},
              {"prenet_dropout", d.prenet_dropout},
              {"attention_dim", d.attention_dim},
              {"attention", d.attention},
              {"max_decode_frames", d.max_decode_frames},
              {"frames_per_step", d.frames_per_step}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  DecoderConfig& d = c.acoustic.decoder;
  try {
    overlay(j, "ref_channels", c.reference.channels);
    overlay(j, "ref_kernel", c.reference.kernel);
    overlay(j, "ref_stride", c.reference.stride);
    overlay(j, "se_reduction", c.reference.se_reduction);
    overlay(j, "summarizer_hidden", c.reference.summarizer_hidden);
    overlay(j, "embedding_dim", c.reference.embedding_dim);
    overlay(j, "n_phonemes", c.predictor.n_phonemes);
    overlay(j, "n_speakers", c.predictor.n_speakers);
    overlay(j, "n_styles", c.n_styles);
    overlay(j, "n_mels", c.acoustic.n_mels);
    overlay(j, "phone_dim", c.predictor.phone_dim);
    overlay(j, "speaker_dim", c.predictor.speaker_dim);
    overlay(j, "predictor_channels", c.predictor.channels);
    overlay(j, "predictor_kernel", c.predictor.kernel);
    overlay(j, "predictor_frame_channels", c.predictor.frame_channels);
    overlay(j, "predictor_frame_kernel", c.predictor.frame_kernel);
    overlay(j, "hierarchical", c.predictor.hierarchical);
    overlay(j, "acoustic_phone_dim", c.acoustic.phone_dim);
    overlay(j, "acoustic_speaker_dim", c.acoustic.speaker_dim);
    overlay(j, "encoder_dim", c.acoustic.encoder_dim);
    overlay(j, "decoder_hidden", d.hidden);
    overlay(j, "prenet_dim", d.prenet_dim);
    overlay(j, "prenet_dropout", d.prenet_dropout);
    overlay(j, "attention_dim", d.attention_dim);
    overlay(j, "attention", d.attention);
    overlay(j, "max_decode_frames", d.max_decode_frames);
    overlay(j, "frames_per_step", d.frames_per_step);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.acoustic.n_phonemes = c.predictor.n_phonemes;
  c.acoustic.n_speakers = c.predictor.n_speakers;
  c.predictor.style_dim = c.reference.embedding_dim;
  c.acoustic.style_dim = c.reference.embedding_dim;
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"stage1_steps", c.stage1_steps},
              {"kl_anneal_start", c.kl_anneal_start},
              {"kl_anneal_end", c.kl_anneal_end},
              {"kl_weight_max", c.kl_weight_max},
              {"kl_margin", c.kl_margin},
              {"grl_lambda", c.grl_lambda},
              {"w_recon", c.w_recon},
              {"w_kl", c.w_kl},
              {"w_spk", c.w_spk},
              {"w_style", c.w_style},
              {"w_prosody", c.w_prosody},
              {"w_cyc1", c.w_cyc1},
              {"w_cyc2", c.w_cyc2},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"total_steps", c.total_steps},
              {"seed", c.seed},
              {"grad_clip", c.grad_clip},
              {"log_interval", c.log_interval},
              {"checkpoint_interval", c.checkpoint_interval},
              {"val_interval", c.val_interval},
              {"val_utterances", c.val_utterances},
              {"style_loss_mask", c.style_loss_mask},
              {"free_decode_ratio", c.free_decode_ratio},
              {"model", model_config_to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    overlay(j, "stage1_steps", c.stage1_steps);
    overlay(j, "kl_anneal_start", c.kl_anneal_start);
    overlay(j, "kl_anneal_end", c.kl_anneal_end);
    overlay(j, "kl_weight_max", c.kl_weight_max);
    overlay(j, "kl_margin", c.kl_margin);
    overlay(j, "grl_lambda", c.grl_lambda);
    overlay(j, "w_recon", c.w_recon);
    overlay(j, "w_kl", c.w_kl);
    overlay(j, "w_spk", c.w_spk);
    overlay(j, "w_style", c.w_style);
    overlay(j, "w_prosody", c.w_prosody);
    overlay(j, "w_cyc1", c.w_cyc1);
    overlay(j, "w_cyc2", c.w_cyc2);
    overlay(j, "batch_size", c.batch_size);
    overlay(j, "learning_rate", c.learning_rate);
    overlay(j, "total_steps", c.total_steps);
    overlay(j, "seed", c.seed);
    overlay(j, "grad_clip", c.grad_clip);
    overlay(j, "log_interval", c.log_interval);
    overlay(j, "checkpoint_interval", c.checkpoint_interval);
    overlay(j, "val_interval", c.val_interval);
    overlay(j, "val_utterances", c.val_utterances);
    overlay(j, "style_loss_mask", c.style_loss_mask);
    overlay(j, "free_decode_ratio", c.free_decode_ratio);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
  c.validate();
  return c;
}

json stats_to_json(const ProsodyStats& stats) {
  json out = json::array();
  for (const auto& [id, s] : stats.speakers) {
    out.push_back({{"speaker_id", id},
                   {"pitch", {s.pitch.mean, s.pitch.std}},
                   {"energy", {s.energy.mean, s.energy.std}},
                   {"log_duration", {s.log_duration.mean, s.log_duration.std}}});
  }
  return out;
}

ProsodyStats stats_from_json(const json& j) {
  ProsodyStats stats;
  try {
    for (const json& row : j) {
      auto pair = [&](const char* key) {
        return MomentPair{row.at(key).at(0).get<double>(), row.at(key).at(1).get<double>()};
      };
      stats.speakers[row.at("speaker_id").get<int>()] =
          SpeakerStats{pair("pitch"), pair("energy"), pair("log_duration")};
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("prosody stats: ") + e.what());
  }
  return stats;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace styleweaver
