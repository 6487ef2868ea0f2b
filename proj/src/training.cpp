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

#include "styleweaver/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "styleweaver/checkpoint.hpp"
#include "styleweaver/config_json.hpp"
#include "styleweaver/error.hpp"
#include "styleweaver/evaluation.hpp"
#include "styleweaver/inference.hpp"
#include "styleweaver/random.hpp"

namespace styleweaver {

using nlohmann::json;

namespace {

// Independent random streams per step.
enum Stream : std::uint64_t {
  kBatchStream = 0xb47c,
  kNoiseStream = 0x9015e,
  kSpeakerStream = 0x5be4,
  kDropoutStream = 0xd40b,
};

Rng stream_rng(std::uint64_t seed, Stream s, std::uint64_t step) {
  return Rng(mix_seed(mix_seed(seed, s), step));
}

Var mean_of(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) return t.constant(Mat::Zero(1, 1));
  return ag::scale(ag::add_n(xs), 1.0 / static_cast<double>(xs.size()));
}

constexpr int kEvaluationSentences = 50;

}  // namespace

void TrainConfig::validate() const {
  if (stage1_steps < 0 || stage1_steps > kl_anneal_start || kl_anneal_start > kl_anneal_end ||
      kl_anneal_end > total_steps) {
    throw ConfigError(
        "train config: need 0 <= stage1_steps <= kl_anneal_start <= kl_anneal_end <= total_steps");
  }
  for (double w : {w_recon, w_kl, w_spk, w_style, w_prosody, w_cyc1, w_cyc2, kl_weight_max,
                   kl_margin, grl_lambda}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("train config: weights, margin and lambda must be finite and >= 0");
    }
  }
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (total_steps < 1) throw ConfigError("train config: total_steps must be >= 1");
  if (log_interval < 1 || checkpoint_interval < 1 || val_interval < 1) {
    throw ConfigError("train config: intervals must be >= 1");
  }
  if (val_utterances < 0) throw ConfigError("train config: val_utterances must be >= 0");
  if (!(free_decode_ratio > 0.0)) throw ConfigError("train config: free_decode_ratio must be > 0");
}

double LossWeights::weighted_sum(const LossReport& r) const {
  return recon * r.recon + kl * r.kl + speaker_adv * r.speaker_adv +
         style_masked * r.style_masked + prosody_phone * r.prosody_phone +
         prosody_frame * r.prosody_frame + cycle_rt * r.cycle_rt + cycle_rg * r.cycle_rg;
}

double anneal_weight(int step, const TrainConfig& c) {
  if (step < 0) throw PreconditionError("anneal_weight: negative step");
  if (step < c.kl_anneal_start) return 0.0;
  if (step >= c.kl_anneal_end) return c.kl_weight_max;
  return c.kl_weight_max * static_cast<double>(step - c.kl_anneal_start) /
         static_cast<double>(c.kl_anneal_end - c.kl_anneal_start);
}

LossWeights loss_weights(int step, const TrainConfig& c) {
  // Stage 1 trains reconstruction alone.
  const double on = step < c.stage1_steps ? 0.0 : 1.0;
  LossWeights w{};
  w.recon = c.w_recon;
  w.kl = c.w_kl * anneal_weight(step, c);
  w.speaker_adv = on * c.w_spk;
  w.style_masked = on * c.w_style;
  w.prosody_phone = on * c.w_prosody;
  w.prosody_frame = on * c.w_prosody;
  w.cycle_rt = on * c.w_cyc1;
  w.cycle_rg = on * c.w_cyc2;
  return w;
}

std::string format_metrics_row(int step, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", step, r.recon,
                r.kl, r.speaker_adv, r.style_masked, r.prosody_phone, r.prosody_frame, r.cycle_rt,
                r.cycle_rg, r.total);
  return buf;
}

CycleLosses cycle_losses(Tape& t, const Var& z_global, const Var& mel_target_pred,
                         const Var& mel_random_pred, const ReferenceEncoder& extractor) {
  if (!mel_target_pred.valid() || !mel_random_pred.valid() || !z_global.valid()) {
    throw PreconditionError("cycle_losses: both forward passes are required");
  }
  EncodeOptions opts;
  opts.norm = nn::NormMode::kEval;
  opts.frozen = true;
  const Var mels[2] = {mel_target_pred, mel_random_pred};
  const auto post = extractor.encode(t, mels, opts);
  const Var& e_t = post[0].mu;
  const Var& e_r = post[1].mu;
  return {ag::mse(e_r, e_t), ag::mse(e_r, z_global)};
}

Trainer::Trainer(StyleWeaverModel& model, const Corpus& corpus, const TrainConfig& config)
    : model_(&model),
      corpus_(&corpus),
      config_(config),
      stats_(compute_speaker_stats(corpus, Split::kTrain)),
      train_(select_split(corpus, Split::kTrain)),
      optimizer_(model.store, nn::AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8,
                                             config.grad_clip}) {
  config_.validate();
  const ModelConfig& mc = model.config();
  if (mc.predictor.n_speakers != corpus.n_speakers() ||
      mc.predictor.n_phonemes != corpus.config.phoneme_inventory ||
      mc.acoustic.n_mels != corpus.config.n_mels || mc.n_styles != corpus.n_styles()) {
    throw ConfigError("model vocabulary does not match the corpus");
  }
  if (train_.empty()) throw MissingDataError("corpus has no training utterances");
  for (int i = 0; i < corpus.n_styles(); ++i) {
    if (corpus.config.styles[static_cast<std::size_t>(i)].name == "neutral") neutral_style_ = i;
  }
}

std::vector<const UtteranceRecord*> Trainer::batch_for_step(int step) const {
  Rng rng = stream_rng(config_.seed, kBatchStream, static_cast<std::uint64_t>(step));
  const int n = static_cast<int>(train_.size());
  std::vector<const UtteranceRecord*> out;
  if (config_.batch_size >= n) {
    for (int i = 0; i < config_.batch_size; ++i) out.push_back(train_[rng.uniform_int(0, n - 1)]);
    return out;
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < config_.batch_size; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    out.push_back(train_[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  return out;
}

LossReport Trainer::training_step(int step, const StepOptions& options) {
  const auto batch = batch_for_step(step);
  return training_step(batch, step, options);
}

LossReport Trainer::training_step(std::span<const UtteranceRecord* const> batch, int step,
                                  const StepOptions& options) {
  if (batch.empty()) throw PreconditionError("training_step: empty batch");
  StyleWeaverModel& m = *model_;
  const LossWeights w = loss_weights(step, config_);
  const bool cycle_on = w.cycle_rt > 0.0 || w.cycle_rg > 0.0;
  const int n_speakers = m.config().predictor.n_speakers;
  const int dim = m.extractor.embedding_dim();
  const int r = m.config().acoustic.decoder.frames_per_step;
  const auto ustep = static_cast<std::uint64_t>(step);

  Rng noise = stream_rng(config_.seed, kNoiseStream, ustep);
  Rng speakers = stream_rng(config_.seed, kSpeakerStream, ustep);

  Tape t;
  std::vector<Var> mels;
  std::vector<Mat> phis;
  std::vector<int> ids;
  std::vector<std::optional<int>> labels;
  for (const UtteranceRecord* u : batch) {
    mels.push_back(t.constant(u->mel_matrix()));
    Mat phi(1, dim);
    for (ag::Index k = 0; k < dim; ++k) phi(0, k) = noise.normal();
    phis.push_back(std::move(phi));
    ids.push_back(u->speaker_id);
    if (config_.style_loss_mask) {
      labels.push_back(u->style_label);
    } else {
      labels.push_back(u->style_label.value_or(neutral_style_));
    }
  }
  EncodeOptions enc;
  enc.norm = nn::NormMode::kTrain;
  const auto posts = m.extractor.encode(t, mels, enc, phis);
  std::vector<Var> zs;
  for (const PosteriorVars& p : posts) zs.push_back(p.z);

  LossReport rep;
  std::vector<std::pair<double, Var>> terms;

  // KL stays off the tape while its weight is zero.
  if (w.kl > 0.0) {
    std::vector<Var> kls;
    for (const PosteriorVars& p : posts) kls.push_back(kl_loss(p.mu, p.log_sigma, config_.kl_margin));
    Var kl = mean_of(t, kls);
    rep.kl = kl.item();
    terms.emplace_back(w.kl, kl);
  } else {
    double acc = 0.0;
    for (const PosteriorVars& p : posts) {
      acc += std::max(0.0, kl_divergence(p.mu.value(), p.log_sigma.value()) - config_.kl_margin);
    }
    rep.kl = acc / static_cast<double>(posts.size());
  }

  Var adv = speaker_adversarial_loss(t, zs, ids, m.speaker_head, config_.grl_lambda);
  rep.speaker_adv = adv.item();
  terms.emplace_back(w.speaker_adv, adv);
  Var style = style_loss_masked(t, zs, labels, m.style_head);
  rep.style_masked = style.item();
  terms.emplace_back(w.style_masked, style);

  std::vector<Var> recon, pphone, pframe, crt, crg;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const UtteranceRecord& u = *batch[i];
    const ProsodyTargets targets = make_prosody_targets(u, stats_);
    const PredictorOutput pred =
        m.predictor.forward(t, u.phonemes, u.speaker_id, zs[i], u.durations);
    const ProsodyLoss pl = prosody_loss(t, pred, targets, m.predictor.hierarchical());
    pphone.push_back(pl.phone);
    pframe.push_back(pl.frame);

    // The decoder sees ground-truth phone prosody while training.
    const Var gt_prosody = t.constant(targets.phone.leftCols(2));
    DecodeOptions dopt;
    dopt.dropout_seed = mix_seed(mix_seed(config_.seed, kDropoutStream),
                                 ustep * static_cast<std::uint64_t>(batch.size()) + i);
    const Var mem1 = m.acoustic.encode_text(t, u.phonemes,
                                            m.acoustic.speaker_embedding(t, u.speaker_id), zs[i],
                                            gt_prosody);
    const DecodeResult d1 = m.acoustic.decode_teacher_forced(t, mem1, mels[i], dopt);
    recon.push_back(reconstruction_loss(d1.mel, mels[i], d1.stop_logits,
                                        stop_targets(u.n_frames(), r)));

    int other = u.speaker_id;
    if (n_speakers > 1) {
      other = speakers.uniform_int(0, n_speakers - 2);
      if (other >= u.speaker_id) ++other;
    }
    if (options.force_random_speaker) other = *options.force_random_speaker;
    if (!cycle_on) continue;
    const Var mem2 = m.acoustic.encode_text(t, u.phonemes, m.acoustic.speaker_embedding(t, other),
                                            zs[i], gt_prosody);
    const int cap = std::max(
        1, static_cast<int>(std::ceil(config_.free_decode_ratio * static_cast<double>(u.n_frames()))));
    const DecodeResult d2 = options.teacher_forced_second
                                ? m.acoustic.decode_teacher_forced(t, mem2, mels[i], dopt)
                                : m.acoustic.decode_free(t, mem2, cap, dopt);
    const CycleLosses cl = cycle_losses(t, ag::detach(zs[i]), d1.mel, d2.mel, m.extractor);
    crt.push_back(cl.cycle_rt);
    crg.push_back(cl.cycle_rg);
  }

  Var vrecon = mean_of(t, recon);
  Var vphone = mean_of(t, pphone);
  Var vframe = mean_of(t, pframe);
  rep.recon = vrecon.item();
  rep.prosody_phone = vphone.item();
  rep.prosody_frame = vframe.item();
  terms.emplace_back(w.recon, vrecon);
  terms.emplace_back(w.prosody_phone, vphone);
  if (m.predictor.hierarchical()) terms.emplace_back(w.prosody_frame, vframe);
  if (cycle_on) {
    Var vrt = mean_of(t, crt);
    Var vrg = mean_of(t, crg);
    rep.cycle_rt = vrt.item();
    rep.cycle_rg = vrg.item();
    terms.emplace_back(w.cycle_rt, vrt);
    terms.emplace_back(w.cycle_rg, vrg);
  }
  rep.total = w.weighted_sum(rep);

  const std::pair<const char*, double> named[] = {
      {"recon", rep.recon},           {"kl", rep.kl},
      {"speaker_adv", rep.speaker_adv}, {"style_masked", rep.style_masked},
      {"prosody_phone", rep.prosody_phone}, {"prosody_frame", rep.prosody_frame},
      {"cycle_rt", rep.cycle_rt},     {"cycle_rg", rep.cycle_rg}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite " + std::string(name) + " loss at step " +
                           std::to_string(step));
    }
  }

  if (!options.apply_update) return rep;
  std::vector<Var> weighted;
  for (const auto& [weight, v] : terms) {
    if (weight > 0.0) weighted.push_back(ag::scale(v, weight));
  }
  if (weighted.empty()) return rep;
  m.store.zero_grad();
  t.backward(ag::add_n(weighted));
  optimizer_.step();
  return rep;
}

ValidationMetrics validate_model(const StyleWeaverModel& model,
                                 std::span<const UtteranceRecord* const> utterances,
                                 const ProsodyStats& stats) {
  ValidationMetrics v;
  if (utterances.empty()) return v;
  const int r = model.config().acoustic.decoder.frames_per_step;
  for (const UtteranceRecord* u : utterances) {
    Tape t;
    const Mat mel = u->mel_matrix();
    Var z = t.constant(model.extractor.posterior_mean(mel));
    const ProsodyTargets targets = make_prosody_targets(*u, stats);
    Var mem = model.acoustic.encode_text(t, u->phonemes,
                                         model.acoustic.speaker_embedding(t, u->speaker_id), z,
                                         t.constant(targets.phone.leftCols(2)));
    DecodeOptions opts;
    opts.dropout = false;
    Var gt = t.constant(mel);
    DecodeResult d = model.acoustic.decode_teacher_forced(t, mem, gt, opts);
    v.recon += reconstruction_loss(d.mel, gt, d.stop_logits, stop_targets(u->n_frames(), r)).item();
    const UtteranceProsodyScore s =
        score_utterance(predict_utterance_prosody(model, *u, stats), *u, stats);
    v.f0_corr += s.f0;
    v.energy_corr += s.energy;
    v.duration_corr += s.duration;
  }
  const double n = static_cast<double>(utterances.size());
  v.recon /= n;
  v.f0_corr /= n;
  v.energy_corr /= n;
  v.duration_corr /= n;
  return v;
}

json checkpoint_metadata(const StyleWeaverModel& model, const Corpus& corpus,
                         const TrainConfig& config, const ProsodyStats& stats, int step,
                         bool with_evaluation_data) {
  json meta{{"format", "styleweaver"},
            {"step", step},
            {"train_config", train_config_to_json(config)},
            {"corpus_config", corpus_config_to_json(corpus.config)},
            {"corpus_seed", corpus.seed},
            {"stats", stats_to_json(stats)}};
  if (with_evaluation_data) {
    meta["centroids"] = centroids_to_json(compute_centroids(model, corpus));
    json sentences = json::array();
    json ids = json::array();
    for (const UtteranceRecord* u : select_split(corpus, Split::kTest)) {
      if (static_cast<int>(sentences.size()) >= kEvaluationSentences) break;
      sentences.push_back(u->phonemes);
      ids.push_back(u->utt_id);
    }
    meta["evaluation_sentences"] = sentences;
    meta["evaluation_utterances"] = ids;
  }
  return meta;
}

namespace {

// Keeps rows logged before `start` so a resumed run appends seamlessly.
void rewrite_log(const std::filesystem::path& path, const std::string& header, int start) {
  std::vector<std::string> keep;
  if (start > 0 && std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoi(line.substr(0, line.find(','))) < start) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << header << '\n';
  for (const std::string& l : keep) out << l << '\n';
}

}  // namespace

TrainResult run_training(const Corpus& corpus, const TrainConfig& config,
                         const std::filesystem::path& out_dir, const RunOptions& options) {
  TrainConfig cfg = config;
  cfg.model.bind_to_corpus(corpus.config);
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  {
    std::ofstream out(out_dir / "config.json");
    if (!out) throw IoError("cannot write " + (out_dir / "config.json").string());
    out << train_config_to_json(cfg).dump(2) << '\n';
  }

  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer trainer(model, corpus, cfg);
  TrainResult result;
  const auto latest = out_dir / "latest.swck";
  if (options.resume && std::filesystem::exists(latest)) {
    const json meta = load_checkpoint(latest, model.store);
    result.start_step = meta.at("step").get<int>();
  }

  const auto metrics_path = out_dir / "metrics.csv";
  const auto val_path = out_dir / "val.csv";
  rewrite_log(metrics_path, kMetricsHeader, result.start_step);
  rewrite_log(val_path, "step,recon,f0_corr,energy_corr,duration_corr", result.start_step);
  std::ofstream metrics(metrics_path, std::ios::app);
  std::ofstream val(val_path, std::ios::app);
  if (!metrics || !val) throw IoError("cannot append to logs in " + out_dir.string());

  auto val_set = select_split(corpus, Split::kVal);
  if (static_cast<int>(val_set.size()) > cfg.val_utterances) val_set.resize(cfg.val_utterances);

  for (int step = result.start_step; step < cfg.total_steps; ++step) {
    result.last = trainer.training_step(step);
    ++result.steps_run;
    if (step % cfg.log_interval == 0) {
      metrics << format_metrics_row(step, result.last) << '\n';
      metrics.flush();
      if (options.on_log) options.on_log(step, result.last);
    }
    const int done = step + 1;
    if (done % cfg.val_interval == 0 && !val_set.empty()) {
      const ValidationMetrics v = validate_model(model, val_set, trainer.stats());
      char buf[256];
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g", step, v.recon, v.f0_corr,
                    v.energy_corr, v.duration_corr);
      val << buf << '\n';
      val.flush();
    }
    if (done % cfg.checkpoint_interval == 0 && done < cfg.total_steps) {
      const json meta = checkpoint_metadata(model, corpus, cfg, trainer.stats(), done, false);
      save_checkpoint(out_dir / ("ckpt_" + std::to_string(done) + ".swck"), model.store, meta);
      save_checkpoint(latest, model.store, meta);
    }
  }
  if (!metrics || !val) throw IoError("failed writing logs in " + out_dir.string());

  const json meta =
      checkpoint_metadata(model, corpus, cfg, trainer.stats(), cfg.total_steps, true);
  result.final_checkpoint = out_dir / "final.swck";
  save_checkpoint(result.final_checkpoint, model.store, meta);
  save_checkpoint(latest, model.store, meta);
  return result;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  LoadedModel out;
  out.metadata = read_checkpoint_metadata(checkpoint);
  try {
    out.config = train_config_from_json(out.metadata.at("train_config"));
    out.corpus_config = corpus_config_from_json(out.metadata.at("corpus_config"));
    out.stats = stats_from_json(out.metadata.at("stats"));
    out.step = out.metadata.at("step").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(checkpoint.string() + ": incomplete metadata: " + e.what());
  }
  out.model = std::make_unique<StyleWeaverModel>(out.config.model, out.config.seed);
  load_checkpoint(checkpoint, out.model->store);
  return out;
}

}  // namespace styleweaver
