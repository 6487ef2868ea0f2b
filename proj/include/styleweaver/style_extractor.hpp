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

// Reference encoder: conv stack + SE-ResNet block + recurrent summarizer
// feeding a diagonal-Gaussian posterior over a 64-dim style embedding, with
// an adversarial speaker head (behind a gradient reversal) and a
// semi-supervised style head whose loss is masked for unlabeled items.

#include <optional>
#include <span>
#include <vector>

#include "styleweaver/nn.hpp"

namespace styleweaver {

using ag::Mat;
using ag::Tape;
using ag::Var;

struct RefEncoderConfig {
  std::vector<int> channels{32, 32, 64, 64, 128, 128};
  int kernel = 3;
  int stride = 2;
  int se_reduction = 16;
  int summarizer_hidden = 128;
  int embedding_dim = 64;

  void validate() const;
};

inline constexpr double kLogSigmaMin = -8.0;
inline constexpr double kLogSigmaMax = 4.0;

/// Numeric view of a posterior (one utterance).
struct StylePosterior {
  Mat mu;         // 1 x D
  Mat log_sigma;  // 1 x D
  Mat phi;        // 1 x D
  Mat z;          // 1 x D
};

/// Posterior as nodes on a tape.
struct PosteriorVars {
  Var mu;
  Var log_sigma;
  Var z;
};

struct EncodeOptions {
  nn::NormMode norm = nn::NormMode::kEval;
  /// Use parameter values with gradients stopped (re-extraction paths).
  bool frozen = false;
  /// Force SE gates to 1.
  bool se_bypass = false;
};

/// z = mu + exp(log_sigma) * phi.
Var reparameterize(const Var& mu, const Var& log_sigma, const Var& phi);
Mat reparameterize(const Mat& mu, const Mat& log_sigma, const Mat& phi);

/// Closed-form KL( N(mu, sigma^2) || N(0, I) ) for diagonal Gaussians.
double kl_divergence(const Mat& mu, const Mat& log_sigma);
/// max(0, KL - delta). Gradient is exactly zero when KL < delta.
Var kl_loss(const Var& mu, const Var& log_sigma, double delta);

class ReferenceEncoder {
 public:
  ReferenceEncoder() = default;
  ReferenceEncoder(nn::ParameterStore& store, const RefEncoderConfig& config, int n_mels,
                   Rng& rng);

  /// Encodes each mel (T_i x n_mels). In training-norm mode the batch
  /// statistics are shared across all items. `phis` supplies the noise
  /// draws (one 1 x D row per item); if empty, z = mu.
  std::vector<PosteriorVars> encode(Tape& t, std::span<const Var> mels,
                                    const EncodeOptions& options, std::span<const Mat> phis = {},
                                    std::vector<Mat>* se_gates = nullptr) const;

  /// Single-utterance convenience wrapper returning numeric values.
  StylePosterior encode_reference(const Mat& mel, const Mat& phi) const;
  /// Posterior mean in evaluation mode.
  Mat posterior_mean(const Mat& mel) const;

  const RefEncoderConfig& config() const { return config_; }
  int embedding_dim() const { return config_.embedding_dim; }

 private:
  struct ConvUnit {
    nn::Conv2d conv;
    nn::BatchNorm norm;
  };

  /// Applies conv + norm across the batch (norm statistics shared in
  /// training mode).
  std::vector<Var> conv_norm(Tape& t, const std::vector<Var>& xs, const nn::Conv2d& conv,
                             const nn::BatchNorm& norm, std::vector<ag::Index>& heights,
                             ag::Index& width, const EncodeOptions& options) const;

  RefEncoderConfig config_;
  int n_mels_ = 0;
  std::vector<ConvUnit> stack_;
  ConvUnit res_a_;
  ConvUnit res_b_;
  nn::Linear se_squeeze_;
  nn::Linear se_excite_;
  nn::Gru summarizer_;
  nn::Linear mu_head_;
  nn::Linear log_sigma_head_;
};

/// One fully connected layer producing class logits from an embedding.
struct ClassifierHead {
  nn::Linear fc;

  ClassifierHead() = default;
  ClassifierHead(nn::ParameterStore& store, const std::string& name, int input_dim,
                 int classes, Rng& rng)
      : fc(store, name, input_dim, classes, rng) {}
  int classes() const { return fc.out_features(); }
  Var logits(Tape& t, const Var& z, bool frozen = false) const { return fc(t, z, frozen); }
};

/// Mean cross-entropy of softmax(head(grl(z, lambda))) against speaker ids.
Var speaker_adversarial_loss(Tape& t, std::span<const Var> zs, std::span<const int> speaker_ids,
                             const ClassifierHead& head, double lambda);

/// Sum of labeled-item cross-entropies / max(1, #labeled). Unlabeled items
/// never enter the graph. Returns a constant 0 when nothing is labeled.
Var style_loss_masked(Tape& t, std::span<const Var> zs,
                      std::span<const std::optional<int>> labels, const ClassifierHead& head);

}  // namespace styleweaver
