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

#include "styleweaver/style_extractor.hpp"

#include <cmath>

#include "styleweaver/error.hpp"

namespace styleweaver {

void RefEncoderConfig::validate() const {
  if (channels.size() != 6) throw ConfigError("reference encoder needs exactly 6 conv layers");
  for (int c : channels) {
    if (c < 1) throw ConfigError("reference encoder: channel count < 1");
  }
  if (se_reduction < 1 || channels.back() % se_reduction != 0) {
    throw ConfigError("reference encoder: SE reduction must divide the block channel count");
  }
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("reference encoder: kernel must be odd");
  if (stride < 1) throw ConfigError("reference encoder: stride < 1");
  if (summarizer_hidden < 1 || embedding_dim < 1) {
    throw ConfigError("reference encoder: hidden sizes must be positive");
  }
}

Var reparameterize(const Var& mu, const Var& log_sigma, const Var& phi) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols() || mu.rows() != phi.rows() ||
      mu.cols() != phi.cols()) {
    throw ShapeError("reparameterize: dimension mismatch");
  }
  return ag::add(mu, ag::mul(ag::exp(log_sigma), phi));
}

Mat reparameterize(const Mat& mu, const Mat& log_sigma, const Mat& phi) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols() || mu.rows() != phi.rows() ||
      mu.cols() != phi.cols()) {
    throw ShapeError("reparameterize: dimension mismatch");
  }
  return mu + (log_sigma.array().exp() * phi.array()).matrix();
}

double kl_divergence(const Mat& mu, const Mat& log_sigma) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols()) {
    throw ShapeError("kl_divergence: dimension mismatch");
  }
  const auto ls = log_sigma.array();
  return 0.5 * (mu.array().square() + (2.0 * ls).exp() - 1.0 - 2.0 * ls).sum();
}

Var kl_loss(const Var& mu, const Var& log_sigma, double delta) {
  if (!(delta >= 0.0)) throw ConfigError("kl_loss: margin must be >= 0");
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols()) {
    throw ShapeError("kl_loss: dimension mismatch");
  }
  // 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
  Var terms = ag::sub(ag::add(ag::square(mu), ag::exp(ag::scale(log_sigma, 2.0))),
                      ag::scale(log_sigma, 2.0));
  Var kl = ag::scale(ag::add_scalar(ag::sum(terms), -static_cast<double>(mu.value().size())), 0.5);
  return ag::relu(ag::add_scalar(kl, -delta));
}

ReferenceEncoder::ReferenceEncoder(nn::ParameterStore& store, const RefEncoderConfig& config,
                                   int n_mels, Rng& rng)
    : config_(config), n_mels_(n_mels) {
  config_.validate();
  int in = 1;
  ag::Index width = n_mels;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::string name = "ref.conv" + std::to_string(i);
    ConvUnit unit{nn::Conv2d(store, name, in, config_.channels[i], config_.kernel, config_.stride,
                             rng),
                  nn::BatchNorm(store, name + ".bn", config_.channels[i], rng)};
    stack_.push_back(unit);
    in = config_.channels[i];
    width = (width + 2 * (config_.kernel / 2) - config_.kernel) / config_.stride + 1;
  }
  const int c = in;
  res_a_ = {nn::Conv2d(store, "ref.se.conv_a", c, c, 3, 1, rng),
            nn::BatchNorm(store, "ref.se.conv_a.bn", c, rng)};
  res_b_ = {nn::Conv2d(store, "ref.se.conv_b", c, c, 3, 1, rng),
            nn::BatchNorm(store, "ref.se.conv_b.bn", c, rng)};
  se_squeeze_ = nn::Linear(store, "ref.se.squeeze", c, c / config_.se_reduction, rng);
  se_excite_ = nn::Linear(store, "ref.se.excite", c / config_.se_reduction, c, rng);
  summarizer_ = nn::Gru(store, "ref.gru", static_cast<int>(width) * c, config_.summarizer_hidden,
                        rng);
  mu_head_ = nn::Linear(store, "ref.mu", config_.summarizer_hidden, config_.embedding_dim, rng);
  log_sigma_head_ =
      nn::Linear(store, "ref.log_sigma", config_.summarizer_hidden, config_.embedding_dim, rng);
}

std::vector<Var> ReferenceEncoder::conv_norm(Tape& t, const std::vector<Var>& xs,
                                             const nn::Conv2d& conv, const nn::BatchNorm& norm,
                                             std::vector<ag::Index>& heights, ag::Index& width,
                                             const EncodeOptions& options) const {
  std::vector<Var> conv_out;
  ag::Index out_width = width;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ag::Index w = width;
    conv_out.push_back(conv(t, xs[i], heights[i], w, options.frozen));
    out_width = w;
  }
  width = out_width;
  std::vector<Var> out;
  if (options.norm == nn::NormMode::kTrain) {
    Var joined = conv_out.size() == 1 ? conv_out[0] : ag::concat_rows(conv_out);
    Var normed = norm(t, joined, nn::NormMode::kTrain, options.frozen);
    ag::Index off = 0;
    for (const Var& v : conv_out) {
      out.push_back(conv_out.size() == 1 ? normed : ag::slice_rows(normed, off, v.rows()));
      off += v.rows();
    }
  } else {
    for (const Var& v : conv_out) out.push_back(norm(t, v, nn::NormMode::kEval, options.frozen));
  }
  return out;
}

std::vector<PosteriorVars> ReferenceEncoder::encode(Tape& t, std::span<const Var> mels,
                                                    const EncodeOptions& options,
                                                    std::span<const Mat> phis,
                                                    std::vector<Mat>* se_gates) const {
  if (mels.empty()) throw ShapeError("encode: empty batch");
  if (!phis.empty() && phis.size() != mels.size()) {
    throw ShapeError("encode: one noise draw per item required");
  }
  std::vector<Var> xs;
  std::vector<ag::Index> heights;
  for (const Var& mel : mels) {
    if (mel.rows() < 1) throw ValidationError("encode_reference: empty mel (T = 0)");
    if (mel.cols() != n_mels_) {
      throw ShapeError("encode_reference: expected " + std::to_string(n_mels_) +
                       " mel channels, got " + std::to_string(mel.cols()));
    }
    if (!mel.value().allFinite()) throw ValidationError("encode_reference: non-finite mel");
    xs.push_back(ag::reshape(mel, mel.rows() * mel.cols(), 1));
    heights.push_back(mel.rows());
  }
  ag::Index width = n_mels_;
  for (const ConvUnit& unit : stack_) {
    xs = conv_norm(t, xs, unit.conv, unit.norm, heights, width, options);
    for (Var& x : xs) x = ag::relu(x);
  }

  // SE-ResNet block.
  std::vector<Var> ya = conv_norm(t, xs, res_a_.conv, res_a_.norm, heights, width, options);
  for (Var& y : ya) y = ag::relu(y);
  std::vector<Var> yb = conv_norm(t, ya, res_b_.conv, res_b_.norm, heights, width, options);
  if (se_gates != nullptr) se_gates->clear();
  for (std::size_t i = 0; i < yb.size(); ++i) {
    if (!options.se_bypass) {
      Var squeezed = ag::mean_rows(yb[i]);
      Var gates = ag::sigmoid(
          se_excite_(t, ag::relu(se_squeeze_(t, squeezed, options.frozen)), options.frozen));
      if (se_gates != nullptr) se_gates->push_back(gates.value());
      yb[i] = ag::mul_row(yb[i], gates);
    } else if (se_gates != nullptr) {
      se_gates->push_back(Mat::Ones(1, yb[i].cols()));
    }
    xs[i] = ag::relu(ag::add(yb[i], xs[i]));
  }

  std::vector<PosteriorVars> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const ag::Index c = xs[i].cols();
    Var seq = ag::reshape(xs[i], heights[i], width * c);
    Var states = summarizer_.run(t, seq, options.frozen);
    Var last = ag::slice_rows(states, states.rows() - 1, 1);
    PosteriorVars p;
    p.mu = mu_head_(t, last, options.frozen);
    p.log_sigma = ag::clamp(log_sigma_head_(t, last, options.frozen), kLogSigmaMin, kLogSigmaMax);
    p.z = phis.empty() ? p.mu : reparameterize(p.mu, p.log_sigma, t.constant(phis[i]));
    out.push_back(p);
  }
  return out;
}

StylePosterior ReferenceEncoder::encode_reference(const Mat& mel, const Mat& phi) const {
  Tape t;
  const Var mels[1] = {t.constant(mel)};
  const Mat phis[1] = {phi};
  EncodeOptions opts;
  opts.norm = nn::NormMode::kEval;
  const auto p = encode(t, mels, opts, phis);
  return {p[0].mu.value(), p[0].log_sigma.value(), phi, p[0].z.value()};
}

Mat ReferenceEncoder::posterior_mean(const Mat& mel) const {
  Tape t;
  const Var mels[1] = {t.constant(mel)};
  EncodeOptions opts;
  opts.norm = nn::NormMode::kEval;
  return encode(t, mels, opts)[0].mu.value();
}

Var speaker_adversarial_loss(Tape& t, std::span<const Var> zs, std::span<const int> speaker_ids,
                             const ClassifierHead& head, double lambda) {
  if (zs.size() != speaker_ids.size() || zs.empty()) {
    throw ShapeError("speaker_adversarial_loss: need one speaker id per embedding");
  }
  std::vector<Var> losses;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (speaker_ids[i] < 0 || speaker_ids[i] >= head.classes()) {
      throw ValidationError("speaker id " + std::to_string(speaker_ids[i]) + " out of range");
    }
    losses.push_back(ag::cross_entropy(head.logits(t, ag::grl(zs[i], lambda)), speaker_ids[i]));
  }
  return ag::scale(ag::add_n(losses), 1.0 / static_cast<double>(losses.size()));
}

Var style_loss_masked(Tape& t, std::span<const Var> zs,
                      std::span<const std::optional<int>> labels, const ClassifierHead& head) {
  if (zs.size() != labels.size() || zs.empty()) {
    throw ShapeError("style_loss_masked: need one (optional) label per embedding");
  }
  std::vector<Var> losses;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (!labels[i]) continue;
    if (*labels[i] < 0 || *labels[i] >= head.classes()) {
      throw ValidationError("style label " + std::to_string(*labels[i]) + " out of range");
    }
    losses.push_back(ag::cross_entropy(head.logits(t, zs[i]), *labels[i]));
  }
  if (losses.empty()) return t.constant(Mat::Zero(1, 1));
  return ag::scale(ag::add_n(losses), 1.0 / static_cast<double>(losses.size()));
}

}  // namespace styleweaver
