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

// Staged, annealed optimization of all losses including the
// speaker-transfer-wise double forward with cycle consistency terms.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styleweaver/corpus.hpp"
#include "styleweaver/model.hpp"
#include "styleweaver/nn.hpp"
#include "styleweaver/style_extractor.hpp"

#include <nlohmann/json.hpp>

namespace styleweaver {

struct TrainConfig {
  int stage1_steps = 2000;
  int kl_anneal_start = 2000;
  int kl_anneal_end = 6000;
  double kl_weight_max = 1e-2;
  double kl_margin = 1.0;
  double grl_lambda = 0.5;
  double w_recon = 1.0;
  double w_kl = 1.0;
  double w_spk = 1.0;
  double w_style = 1.0;
  double w_prosody = 1.0;
  double w_cyc1 = 0.1;
  double w_cyc2 = 0.1;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int total_steps = 20000;
  std::uint64_t seed = 1;

  double grad_clip = 1.0;
  int log_interval = 1;
  int checkpoint_interval = 1000;
  int val_interval = 1000;
  int val_utterances = 64;
  /// false reproduces the "w/o SLM" ablation: unlabeled items are
  /// classified as the neutral style instead of being masked.
  bool style_loss_mask = true;
  /// Free-running decode cap for the random-speaker forward, relative to
  /// the ground-truth length.
  double free_decode_ratio = 1.2;
  ModelConfig model;

  void validate() const;
};

struct LossReport {
  double recon = 0.0;
  double kl = 0.0;
  double speaker_adv = 0.0;
  double style_masked = 0.0;
  double prosody_phone = 0.0;
  double prosody_frame = 0.0;
  double cycle_rt = 0.0;
  double cycle_rg = 0.0;
  double total = 0.0;
};

struct LossWeights {
  double recon, kl, speaker_adv, style_masked, prosody_phone, prosody_frame, cycle_rt, cycle_rg;
  double weighted_sum(const LossReport& r) const;
};

/// 0 before kl_anneal_start, linear to kl_weight_max at kl_anneal_end.
double anneal_weight(int step, const TrainConfig& config);
LossWeights loss_weights(int step, const TrainConfig& config);

inline const char* kMetricsHeader =
    "step,recon,kl,speaker_adv,style_masked,prosody_phone,prosody_frame,cycle_rt,cycle_rg,total";
std::string format_metrics_row(int step, const LossReport& r);

struct CycleLosses {
  Var cycle_rt;
  Var cycle_rg;
};

/// Re-extracts posterior means from both synthesized mels with the
/// extractor's weights frozen (evaluation normalization). cycle_rt =
/// MSE(e_random, e_target); cycle_rg = MSE(e_random, stopgrad(z_global)).
CycleLosses cycle_losses(Tape& t, const Var& z_global, const Var& mel_target_pred,
                         const Var& mel_random_pred, const ReferenceEncoder& extractor);

struct StepOptions {
  /// Overrides the random speaker of the second forward.
  std::optional<int> force_random_speaker;
  /// Run the second forward teacher-forced on the ground-truth mel.
  bool teacher_forced_second = false;
  bool apply_update = true;
};

/// Owns the optimizer and the data view used by training_step.
class Trainer {
 public:
  Trainer(StyleWeaverModel& model, const Corpus& corpus, const TrainConfig& config);

  /// One optimization step on the batch drawn for `step`.
  LossReport training_step(int step, const StepOptions& options = {});
  /// One step on an explicit batch.
  LossReport training_step(std::span<const UtteranceRecord* const> batch, int step,
                           const StepOptions& options = {});

  std::vector<const UtteranceRecord*> batch_for_step(int step) const;
  const ProsodyStats& stats() const { return stats_; }
  const TrainConfig& config() const { return config_; }
  nn::Adam& optimizer() { return optimizer_; }

 private:
  StyleWeaverModel* model_;
  const Corpus* corpus_;
  TrainConfig config_;
  ProsodyStats stats_;
  std::vector<const UtteranceRecord*> train_;
  int neutral_style_ = 0;
  nn::Adam optimizer_;
};

struct ValidationMetrics {
  double recon = 0.0;
  double f0_corr = 0.0;
  double energy_corr = 0.0;
  double duration_corr = 0.0;
};

ValidationMetrics validate_model(const StyleWeaverModel& model,
                                 std::span<const UtteranceRecord* const> utterances,
                                 const ProsodyStats& stats);

struct RunOptions {
  bool resume = true;
  /// Called after each logged step.
  std::function<void(int step, const LossReport&)> on_log;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  int steps_run = 0;
  int start_step = 0;
  LossReport last;
};

/// Trains and writes metrics.csv, val.csv, periodic ckpt_<step>.swck,
/// latest.swck and final.swck under out_dir. Resumes from latest.swck when
/// present and options.resume is set.
TrainResult run_training(const Corpus& corpus, const TrainConfig& config,
                         const std::filesystem::path& out_dir, const RunOptions& options = {});

/// Metadata block written into checkpoints (configs, stats, centroids and
/// held-out sentences for self-contained evaluation).
nlohmann::json checkpoint_metadata(const StyleWeaverModel& model, const Corpus& corpus,
                                   const TrainConfig& config, const ProsodyStats& stats,
                                   int step, bool with_evaluation_data);

/// Rebuilds a model from a checkpoint written by run_training.
struct LoadedModel {
  std::unique_ptr<StyleWeaverModel> model;
  TrainConfig config;
  CorpusGenConfig corpus_config;
  ProsodyStats stats;
  nlohmann::json metadata;
  int step = 0;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

}  // namespace styleweaver
