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

#include "styleweaver/acoustic_model.hpp"

#include <cmath>

#include "styleweaver/error.hpp"
#include "styleweaver/random.hpp"

namespace styleweaver {

void DecoderConfig::validate() const {
  if (hidden < 1 || prenet_dim < 1 || attention_dim < 1) {
    throw ConfigError("decoder: dimensions must be positive");
  }
  if (prenet_dropout < 0.0 || prenet_dropout >= 1.0) {
    throw ConfigError("decoder: prenet dropout must be in [0, 1)");
  }
  if (attention != "dot") throw ConfigError("decoder: unsupported attention type " + attention);
  if (max_decode_frames < 1) throw ConfigError("decoder: max_decode_frames must be >= 1");
  if (frames_per_step < 1) throw ConfigError("decoder: frames_per_step must be >= 1");
}

void AcousticConfig::validate() const {
  if (n_phonemes < 1 || n_speakers < 1 || n_mels < 1) {
    throw ConfigError("acoustic model: empty vocabulary or mel dimension");
  }
  if (phone_dim < 1 || speaker_dim < 1 || style_dim < 1 || encoder_dim < 1) {
    throw ConfigError("acoustic model: dimensions must be positive");
  }
  decoder.validate();
}

Mat stop_targets(int frames, int frames_per_step) {
  const int steps = (frames + frames_per_step - 1) / frames_per_step;
  Mat out = Mat::Zero(steps, 1);
  if (steps > 0) out(steps - 1, 0) = 1.0;
  return out;
}

Var reconstruction_loss(const Var& mel_pred, const Var& mel_gt, const Var& stop_logits,
                        const Mat& stop_gt) {
  if (mel_pred.rows() != mel_gt.rows() || mel_pred.cols() != mel_gt.cols()) {
    throw ShapeError("reconstruction_loss: mel shapes differ");
  }
  if (stop_logits.rows() != stop_gt.rows() || stop_logits.cols() != stop_gt.cols()) {
    throw ShapeError("reconstruction_loss: stop shapes differ");
  }
  return ag::add(ag::l1(mel_pred, mel_gt), ag::bce_with_logits(stop_logits, stop_gt));
}

AcousticModel::AcousticModel(nn::ParameterStore& store, const AcousticConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const DecoderConfig& d = config_.decoder;
  const int mem = config_.memory_dim();
  phones_ = nn::Embedding(store, "acoustic.phone_emb", config_.n_phonemes, config_.phone_dim, rng);
  speakers_ =
      nn::Embedding(store, "acoustic.speaker_emb", config_.n_speakers, config_.speaker_dim, rng);
  enc_conv_ = nn::Conv1d(store, "acoustic.enc.conv", config_.phone_dim, config_.encoder_dim, 3, rng);
  enc_rnn_ = nn::Gru(store, "acoustic.enc.gru", config_.encoder_dim, config_.encoder_dim, rng);
  prenet1_ = nn::Linear(store, "acoustic.prenet1", config_.n_mels, d.prenet_dim, rng);
  prenet2_ = nn::Linear(store, "acoustic.prenet2", d.prenet_dim, d.prenet_dim, rng);
  dec_rnn_ = nn::Gru(store, "acoustic.dec.gru", d.prenet_dim + mem, d.hidden, rng);
  key_proj_ = nn::Linear(store, "acoustic.attn.key", mem, d.attention_dim, rng);
  query_proj_ = nn::Linear(store, "acoustic.attn.query", d.hidden, d.attention_dim, rng);
  frame_out_ = nn::Linear(store, "acoustic.frame_out", d.hidden + mem,
                          d.frames_per_step * config_.n_mels, rng);
  stop_out_ = nn::Linear(store, "acoustic.stop_out", d.hidden + mem, 1, rng);
}

Var AcousticModel::speaker_embedding(Tape& t, int speaker_id) const {
  if (speaker_id < 0 || speaker_id >= config_.n_speakers) {
    throw LookupError("unknown speaker " + std::to_string(speaker_id));
  }
  return speakers_.row(t, speaker_id);
}

Var AcousticModel::encode_text(Tape& t, std::span<const int> phonemes,
                               const Var& target_speaker_emb, const Var& style,
                               const Var& phone_prosody) const {
  const auto n = static_cast<ag::Index>(phonemes.size());
  if (n < 1) throw ShapeError("encode_text: no phonemes");
  if (phone_prosody.rows() != n || phone_prosody.cols() != 2) {
    throw ShapeError("encode_text: prosody must be N_p x 2 (got " +
                     std::to_string(phone_prosody.rows()) + "x" +
                     std::to_string(phone_prosody.cols()) + " for " + std::to_string(n) +
                     " phones)");
  }
  if (target_speaker_emb.cols() != config_.speaker_dim || style.cols() != config_.style_dim) {
    throw ShapeError("encode_text: conditioning dimension mismatch");
  }
  Var h = ag::relu(enc_conv_(t, phones_(t, phonemes)));
  Var states = enc_rnn_.run(t, h);
  const Var parts[4] = {states, ag::broadcast_rows(target_speaker_emb, n),
                        ag::broadcast_rows(style, n), phone_prosody};
  return ag::concat_cols(parts);
}

Mat AcousticModel::dropout_mask(Rng& rng, ag::Index cols) const {
  const double p = config_.decoder.prenet_dropout;
  Mat m(1, cols);
  for (ag::Index i = 0; i < cols; ++i) m(0, i) = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
  return m;
}

std::pair<Var, Var> AcousticModel::step(Tape& t, const Var& memory, const Var& keys_t,
                                        const Var& prev_frame, StepState& state,
                                        Rng* dropout_rng, Mat& alignment) const {
  Var p = ag::relu(prenet1_(t, prev_frame));
  if (dropout_rng != nullptr) p = ag::dropout(p, dropout_mask(*dropout_rng, p.cols()));
  p = ag::relu(prenet2_(t, p));
  if (dropout_rng != nullptr) p = ag::dropout(p, dropout_mask(*dropout_rng, p.cols()));
  const Var in[2] = {p, state.context};
  state.h = dec_rnn_.step(t, ag::concat_cols(in), state.h);
  Var weights = ag::softmax_rows(ag::matmul(query_proj_(t, state.h), keys_t));
  alignment = weights.value();
  state.context = ag::matmul(weights, memory);
  const Var hc[2] = {state.h, state.context};
  Var joined = ag::concat_cols(hc);
  Var frames = ag::reshape(frame_out_(t, joined), config_.decoder.frames_per_step, config_.n_mels);
  return {frames, stop_out_(t, joined)};
}

DecodeResult AcousticModel::decode_teacher_forced(Tape& t, const Var& memory, const Var& mel_gt,
                                                  const DecodeOptions& options) const {
  const ag::Index T = mel_gt.rows();
  if (T < 1) throw ShapeError("decode_teacher_forced: empty target");
  if (mel_gt.cols() != config_.n_mels) throw ShapeError("decode_teacher_forced: n_mels mismatch");
  if (memory.cols() != config_.memory_dim()) throw ShapeError("decode: memory width mismatch");
  const int r = config_.decoder.frames_per_step;
  const int steps = static_cast<int>((T + r - 1) / r);
  Rng rng(options.dropout_seed);
  Rng* drop = options.dropout && config_.decoder.prenet_dropout > 0.0 ? &rng : nullptr;

  Var keys_t = ag::transpose(key_proj_(t, memory));
  StepState state{t.constant(Mat::Zero(1, config_.decoder.hidden)),
                  t.constant(Mat::Zero(1, memory.cols()))};
  std::vector<Var> frames, stops;
  DecodeResult out;
  out.alignments.resize(T, memory.rows());
  Var zero = t.constant(Mat::Zero(1, config_.n_mels));
  Mat align;
  for (int k = 0; k < steps; ++k) {
    Var prev = k == 0 ? zero : ag::slice_rows(mel_gt, static_cast<ag::Index>(k) * r - 1, 1);
    auto [f, s] = step(t, memory, keys_t, prev, state, drop, align);
    frames.push_back(f);
    stops.push_back(s);
    for (int j = 0; j < r && k * r + j < T; ++j) out.alignments.row(k * r + j) = align.row(0);
  }
  Var all = ag::concat_rows(frames);
  out.mel = all.rows() == T ? all : ag::slice_rows(all, 0, T);
  out.stop_logits = ag::concat_rows(stops);
  out.steps = steps;
  return out;
}

DecodeResult AcousticModel::decode_free(Tape& t, const Var& memory, int max_frames,
                                        const DecodeOptions& options) const {
  if (max_frames < 1) throw ShapeError("decode_free: max_frames must be >= 1");
  if (memory.cols() != config_.memory_dim()) throw ShapeError("decode: memory width mismatch");
  const int r = config_.decoder.frames_per_step;
  Rng rng(options.dropout_seed);
  Rng* drop = options.dropout && config_.decoder.prenet_dropout > 0.0 ? &rng : nullptr;

  Var keys_t = ag::transpose(key_proj_(t, memory));
  StepState state{t.constant(Mat::Zero(1, config_.decoder.hidden)),
                  t.constant(Mat::Zero(1, memory.cols()))};
  std::vector<Var> frames, stops;
  std::vector<Mat> aligns;
  Var prev = t.constant(Mat::Zero(1, config_.n_mels));
  DecodeResult out;
  out.truncated = true;
  int produced = 0;
  Mat align;
  for (int k = 0; produced < max_frames; ++k) {
    auto [f, s] = step(t, memory, keys_t, prev, state, drop, align);
    const int keep = std::min(r, max_frames - produced);
    frames.push_back(keep == r ? f : ag::slice_rows(f, 0, keep));
    stops.push_back(s);
    for (int j = 0; j < keep; ++j) aligns.push_back(align);
    produced += keep;
    prev = ag::slice_rows(f, r - 1, 1);
    double logit = s.item();
    if (options.stop_hook) logit = options.stop_hook(k, logit);
    if (logit > 0.0) {
      out.truncated = false;
      break;
    }
  }
  out.mel = frames.size() == 1 ? frames[0] : ag::concat_rows(frames);
  out.stop_logits = stops.size() == 1 ? stops[0] : ag::concat_rows(stops);
  out.steps = static_cast<int>(stops.size());
  out.alignments.resize(static_cast<ag::Index>(aligns.size()), memory.rows());
  for (std::size_t i = 0; i < aligns.size(); ++i) {
    out.alignments.row(static_cast<ag::Index>(i)) = aligns[i].row(0);
  }
  return out;
}

}  // namespace styleweaver
