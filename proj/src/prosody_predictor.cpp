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

#include "styleweaver/prosody_predictor.hpp"

#include <cmath>

#include "styleweaver/error.hpp"

namespace styleweaver {

void PredictorConfig::validate() const {
  if (n_phonemes < 1 || n_speakers < 1) throw ConfigError("predictor: empty vocabulary");
  if (phone_dim < 1 || speaker_dim < 1 || style_dim < 1 || channels < 1 || frame_channels < 1) {
    throw ConfigError("predictor: dimensions must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0 || frame_kernel < 1 || frame_kernel % 2 == 0) {
    throw ConfigError("predictor: kernels must be odd");
  }
}

namespace {

std::vector<int> expansion_index(std::span<const int> durations, ag::Index phones) {
  if (static_cast<ag::Index>(durations.size()) != phones) {
    throw ShapeError("length_regulate: " + std::to_string(durations.size()) +
                     " durations for " + std::to_string(phones) + " phones");
  }
  std::vector<int> index;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) {
      throw ValidationError("length_regulate: duration " + std::to_string(durations[i]) +
                            " at phone " + std::to_string(i) + " (must be >= 1)");
    }
    index.insert(index.end(), static_cast<std::size_t>(durations[i]), static_cast<int>(i));
  }
  return index;
}

void check_total(std::span<const int> durations, ag::Index frames) {
  long total = 0;
  for (int d : durations) {
    if (d < 1) throw ValidationError("downsample_phone_mean: duration must be >= 1");
    total += d;
  }
  if (total != frames) {
    throw ShapeError("downsample_phone_mean: durations sum to " + std::to_string(total) +
                     " but there are " + std::to_string(frames) + " frames");
  }
}

}  // namespace

Mat length_regulate(const Mat& phone_feats, std::span<const int> durations) {
  const std::vector<int> index = expansion_index(durations, phone_feats.rows());
  Mat out(static_cast<ag::Index>(index.size()), phone_feats.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.row(static_cast<ag::Index>(i)) = phone_feats.row(index[i]);
  }
  return out;
}

Var length_regulate(const Var& phone_feats, std::span<const int> durations) {
  const std::vector<int> index = expansion_index(durations, phone_feats.rows());
  return ag::gather_rows(phone_feats, index);
}

Mat downsample_phone_mean(const Mat& frame_feats, std::span<const int> durations) {
  check_total(durations, frame_feats.rows());
  Tape t;
  return ag::segment_mean(t.constant(frame_feats), durations).value();
}

Var downsample_phone_mean(const Var& frame_feats, std::span<const int> durations) {
  check_total(durations, frame_feats.rows());
  return ag::segment_mean(frame_feats, durations);
}

std::vector<int> realize_durations(std::span<const double> standardized_log_durations,
                                   int speaker_id, const ProsodyStats& stats) {
  const std::vector<double> log_d =
      destandardize(standardized_log_durations, speaker_id, stats, FeatureKind::kLogDuration);
  std::vector<int> out;
  out.reserve(log_d.size());
  for (double v : log_d) {
    const double frames = std::exp(std::min(v, 20.0));
    out.push_back(std::max(1, static_cast<int>(std::lround(frames))));
  }
  return out;
}

ProsodyPredictor::ProsodyPredictor(nn::ParameterStore& store, const PredictorConfig& config,
                                   Rng& rng)
    : config_(config) {
  config_.validate();
  const int c = config_.channels, k = config_.kernel;
  phones_ = nn::Embedding(store, "prosody.phone_emb", config_.n_phonemes, config_.phone_dim, rng);
  speakers_ =
      nn::Embedding(store, "prosody.speaker_emb", config_.n_speakers, config_.speaker_dim, rng);
  const int phone_in = config_.phone_dim + config_.speaker_dim + config_.style_dim;
  phone_conv1_ = nn::Conv1d(store, "prosody.phone.conv1", phone_in, c, k, rng);
  phone_conv2_ = nn::Conv1d(store, "prosody.phone.conv2", c, c, k, rng);
  phone_out_ = nn::Linear(store, "prosody.phone.out", c, 3, rng);
  // Frame-level parameters exist in both modes so the two configurations
  // share identical phone-level parameter shapes.
  const int fc = config_.frame_channels, fk = config_.frame_kernel;
  frame_conv1_ = nn::Conv1d(store, "prosody.frame.conv1", config_.phone_dim + 2, fc, fk, rng);
  frame_conv2_ = nn::Conv1d(store, "prosody.frame.conv2", fc, fc, fk, rng);
  frame_out_ = nn::Linear(store, "prosody.frame.out", fc, 2, rng);
}

Var ProsodyPredictor::phone_embeddings(Tape& t, std::span<const int> phonemes) const {
  return phones_(t, phonemes);
}

Var ProsodyPredictor::speaker_embedding(Tape& t, int speaker_id) const {
  if (speaker_id < 0 || speaker_id >= config_.n_speakers) {
    throw LookupError("unknown speaker " + std::to_string(speaker_id));
  }
  return speakers_.row(t, speaker_id);
}

Var ProsodyPredictor::predict_phone(Tape& t, const Var& phone_embs, const Var& speaker,
                                    const Var& style) const {
  if (phone_embs.rows() < 1) throw ShapeError("predict_phone: no phones");
  if (phone_embs.cols() != config_.phone_dim || speaker.cols() != config_.speaker_dim ||
      style.cols() != config_.style_dim || speaker.rows() != 1 || style.rows() != 1) {
    throw ShapeError("predict_phone: input dimension mismatch");
  }
  const ag::Index n = phone_embs.rows();
  const Var parts[3] = {phone_embs, ag::broadcast_rows(speaker, n), ag::broadcast_rows(style, n)};
  Var h = ag::relu(phone_conv1_(t, ag::concat_cols(parts)));
  h = ag::relu(phone_conv2_(t, h));
  return phone_out_(t, h);
}

Var ProsodyPredictor::predict_frame(Tape& t, const Var& expanded) const {
  if (expanded.rows() < 1) throw ShapeError("predict_frame: no frames");
  if (expanded.cols() != config_.phone_dim + 2) {
    throw ShapeError("predict_frame: expected " + std::to_string(config_.phone_dim + 2) +
                     " input channels, got " + std::to_string(expanded.cols()));
  }
  Var h = ag::relu(frame_conv1_(t, expanded));
  h = ag::relu(frame_conv2_(t, h));
  return frame_out_(t, h);
}

PredictorOutput ProsodyPredictor::forward(Tape& t, std::span<const int> phonemes,
                                          int source_speaker, const Var& style,
                                          std::span<const int> durations) const {
  Var embs = phone_embeddings(t, phonemes);
  PredictorOutput out;
  out.phone = predict_phone(t, embs, speaker_embedding(t, source_speaker), style);
  Var phone_pe = ag::slice_cols(out.phone, 0, 2);
  if (!config_.hierarchical) {
    out.final_phone = phone_pe;
    return out;
  }
  const Var parts[2] = {embs, phone_pe};
  Var expanded = length_regulate(ag::concat_cols(parts), durations);
  out.frame = predict_frame(t, expanded);
  out.final_phone = downsample_phone_mean(out.frame, durations);
  return out;
}

ProsodyLoss prosody_loss(Tape& t, const PredictorOutput& pred, const ProsodyTargets& targets,
                         bool hierarchical) {
  if (pred.phone.rows() != targets.phone.rows()) {
    throw ShapeError("prosody_loss: phone count mismatch");
  }
  ProsodyLoss loss;
  const Var phone_terms[3] = {
      ag::mse(ag::slice_cols(pred.phone, kPitchCol, 1),
              t.constant(targets.phone.col(kPitchCol))),
      ag::mse(ag::slice_cols(pred.phone, kEnergyCol, 1),
              t.constant(targets.phone.col(kEnergyCol))),
      ag::mse(ag::slice_cols(pred.phone, kLogDurationCol, 1),
              t.constant(targets.phone.col(kLogDurationCol))),
  };
  loss.phone = ag::add_n(phone_terms);
  if (hierarchical) {
    if (!pred.frame.valid() || pred.frame.rows() != targets.frame.rows()) {
      throw ShapeError("prosody_loss: frame prediction missing or misaligned");
    }
    const Var frame_terms[2] = {
        ag::mse(ag::slice_cols(pred.frame, 0, 1), t.constant(targets.frame.col(0))),
        ag::mse(ag::slice_cols(pred.frame, 1, 1), t.constant(targets.frame.col(1))),
    };
    loss.frame = ag::add_n(frame_terms);
    const Var both[2] = {loss.phone, loss.frame};
    loss.total = ag::add_n(both);
  } else {
    loss.frame = t.constant(Mat::Zero(1, 1));
    loss.total = loss.phone;
  }
  return loss;
}

ProsodyLoss prosody_loss(Tape& t, const PredictorOutput& pred, const UtteranceRecord& gt,
                         const ProsodyStats& stats, bool hierarchical) {
  return prosody_loss(t, pred, make_prosody_targets(gt, stats), hierarchical);
}

}  // namespace styleweaver
