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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <cstring>
#include <iterator>
#include <limits>
#include <set>

#include "styleweaver/checkpoint.hpp"
#include "styleweaver/error.hpp"
#include "styleweaver/training.hpp"
#include "test_util.hpp"

using namespace styleweaver;
namespace ag = styleweaver::ag;

namespace {

const Corpus& tiny_corpus() {
  static const Corpus c = generate_corpus(swtest::tiny_corpus_config(20), 17);
  return c;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = swtest::tiny_model_config(tiny_corpus().config);
  c.model.acoustic.decoder.max_decode_frames = 60;
  c.stage1_steps = 2;
  c.kl_anneal_start = 2;
  c.kl_anneal_end = 6;
  c.total_steps = 8;
  c.batch_size = 3;
  c.checkpoint_interval = 4;
  c.val_interval = 4;
  c.val_utterances = 3;
  c.seed = 5;
  return c;
}

bool same_params(const nn::ParameterStore& a, const nn::ParameterStore& b) {
  const auto pa = a.all();
  const auto pb = b.all();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->value != pb[i]->value) return false;
  }
  return true;
}

bool same_report(const LossReport& a, const LossReport& b) {
  return a.recon == b.recon && a.kl == b.kl && a.speaker_adv == b.speaker_adv &&
         a.style_masked == b.style_masked && a.prosody_phone == b.prosody_phone &&
         a.prosody_frame == b.prosody_frame && a.cycle_rt == b.cycle_rt &&
         a.cycle_rg == b.cycle_rg && a.total == b.total;
}

std::vector<std::string> lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Anneal, Schedule) {
  TrainConfig c;
  c.kl_anneal_start = 2000;
  c.kl_anneal_end = 6000;
  c.kl_weight_max = 1e-2;
  EXPECT_EQ(anneal_weight(0, c), 0.0);
  EXPECT_EQ(anneal_weight(1999, c), 0.0);
  EXPECT_DOUBLE_EQ(anneal_weight(4000, c), 5e-3);
  EXPECT_DOUBLE_EQ(anneal_weight(6000, c), 1e-2);
  EXPECT_DOUBLE_EQ(anneal_weight(50000, c), 1e-2);
  for (int s = 0; s < 8000; s += 97) {
    EXPECT_GE(anneal_weight(s, c), 0.0);
    EXPECT_LE(anneal_weight(s, c), c.kl_weight_max);
  }
}

TEST(LossWeights, StageOneIsReconstructionOnly) {
  TrainConfig c;
  const LossWeights w = loss_weights(10, c);
  EXPECT_EQ(w.recon, c.w_recon);
  EXPECT_EQ(w.kl, 0.0);
  EXPECT_EQ(w.speaker_adv, 0.0);
  EXPECT_EQ(w.cycle_rt, 0.0);
  const LossWeights late = loss_weights(10000, c);
  EXPECT_EQ(late.speaker_adv, c.w_spk);
  EXPECT_EQ(late.cycle_rg, c.w_cyc2);
  EXPECT_DOUBLE_EQ(late.kl, c.w_kl * c.kl_weight_max);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.stage1_steps = 3000;  // beyond kl_anneal_start
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.w_cyc1 = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.kl_margin = -0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MetricsRow, Format) {
  LossReport r;
  r.recon = 0.5;
  r.total = 1.25;
  EXPECT_EQ(format_metrics_row(3, r), "3,0.5,0,0,0,0,0,0,0,1.25");
  EXPECT_EQ(std::string(kMetricsHeader),
            "step,recon,kl,speaker_adv,style_masked,prosody_phone,prosody_frame,cycle_rt,"
            "cycle_rg,total");
}

TEST(CycleLosses, Examples) {
  StyleWeaverModel model(tiny_train_config().model, 3);
  Rng rng(1);
  Tape t;
  const Mat mel = swtest::random_mat(rng, 9, 20, 0, 1);
  const Mat e = model.extractor.posterior_mean(mel);
  const CycleLosses same = cycle_losses(t, t.constant(e), t.constant(mel), t.constant(mel),
                                        model.extractor);
  EXPECT_EQ(same.cycle_rt.item(), 0.0);
  EXPECT_NEAR(same.cycle_rg.item(), 0.0, 1e-12);

  // cycle_rg against a shifted global embedding is the mean squared shift.
  const Mat shifted = e.array() + 1.0;
  const CycleLosses rg = cycle_losses(t, t.constant(shifted), t.constant(mel), t.constant(mel),
                                      model.extractor);
  EXPECT_NEAR(rg.cycle_rg.item(), 1.0, 1e-12);
  EXPECT_THROW(cycle_losses(t, t.constant(e), Var{}, t.constant(mel), model.extractor),
               PreconditionError);
}

TEST(CycleLosses, NoGradientIntoExtractorWeights) {
  StyleWeaverModel model(tiny_train_config().model, 3);
  Rng rng(2);
  Tape t;
  Var a = t.variable(swtest::random_mat(rng, 9, 20, 0, 1));
  Var b = t.variable(swtest::random_mat(rng, 7, 20, 0, 1));
  model.store.zero_grad();
  const CycleLosses cl = cycle_losses(t, t.constant(Mat::Zero(1, 8)), a, b, model.extractor);
  const Var both[2] = {cl.cycle_rt, cl.cycle_rg};
  t.backward(ag::add_n(both));
  for (const ag::Parameter* p : model.store.all()) {
    if (p->name.rfind("extractor.", 0) == 0 || p->name.rfind("ref.", 0) == 0) {
      EXPECT_TRUE(p->grad.size() == 0 || (p->grad.array() == 0.0).all()) << p->name;
    }
  }
  EXPECT_GT(b.grad().norm(), 0.0);
  EXPECT_GT(a.grad().norm(), 0.0);
}

TEST(TrainingStep, TotalIsWeightedSum) {
  const TrainConfig cfg = tiny_train_config();
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  for (int step = 0; step < 7; ++step) {
    const LossReport r = tr.training_step(step);
    EXPECT_NEAR(r.total, loss_weights(step, cfg).weighted_sum(r), 1e-6) << step;
    EXPECT_TRUE(std::isfinite(r.total));
    if (step < cfg.stage1_steps) {
      EXPECT_EQ(r.cycle_rt, 0.0);  // cycle skipped in stage 1
      EXPECT_EQ(r.total, r.recon * cfg.w_recon);
    } else {
      EXPECT_GT(r.cycle_rg, 0.0);
    }
  }
}

TEST(TrainingStep, KlGivesNoGradientInStageOne) {
  TrainConfig a = tiny_train_config();
  a.stage1_steps = a.kl_anneal_start = 5;
  a.kl_margin = 0.0;
  TrainConfig b = a;
  b.w_kl = 50.0;
  b.kl_weight_max = 1.0;
  StyleWeaverModel ma(a.model, a.seed), mb(b.model, b.seed);
  Trainer ta(ma, tiny_corpus(), a), tb(mb, tiny_corpus(), b);
  for (int step = 0; step < 3; ++step) {
    ta.training_step(step);
    tb.training_step(step);
  }
  EXPECT_TRUE(same_params(ma.store, mb.store));
}

TEST(TrainingStep, DoubleRunDeterminism) {
  const TrainConfig cfg = tiny_train_config();
  StyleWeaverModel m1(cfg.model, cfg.seed), m2(cfg.model, cfg.seed);
  Trainer t1(m1, tiny_corpus(), cfg), t2(m2, tiny_corpus(), cfg);
  for (int step = 0; step < 5; ++step) {
    EXPECT_TRUE(same_report(t1.training_step(step), t2.training_step(step))) << step;
  }
  EXPECT_TRUE(same_params(m1.store, m2.store));
}

TEST(TrainingStep, UnlabeledOnlyBatchHasZeroStyleLoss) {
  const TrainConfig cfg = tiny_train_config();
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  std::vector<const UtteranceRecord*> batch;
  for (const UtteranceRecord& u : tiny_corpus().utterances) {
    if (!u.style_label && batch.size() < 3) batch.push_back(&u);
  }
  StepOptions o;
  o.apply_update = false;
  const LossReport r = tr.training_step(batch, 4, o);
  EXPECT_EQ(r.style_masked, 0.0);
  EXPECT_GT(r.speaker_adv, 0.0);
  EXPECT_GT(r.recon, 0.0);
  EXPECT_GT(r.prosody_phone, 0.0);
  EXPECT_GT(r.prosody_frame, 0.0);
  EXPECT_GT(r.cycle_rg, 0.0);
}

TEST(TrainingStep, UnmaskedAblationLabelsUnlabeledAsNeutral) {
  TrainConfig cfg = tiny_train_config();
  cfg.style_loss_mask = false;
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  std::vector<const UtteranceRecord*> batch;
  for (const UtteranceRecord& u : tiny_corpus().utterances) {
    if (!u.style_label && batch.size() < 2) batch.push_back(&u);
  }
  StepOptions o;
  o.apply_update = false;
  EXPECT_GT(tr.training_step(batch, 4, o).style_masked, 0.0);
}

TEST(TrainingStep, DegenerateCycleIsExactlyZero) {
  TrainConfig cfg = tiny_train_config();
  cfg.stage1_steps = 0;
  cfg.kl_anneal_start = 0;
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  const auto batch = tr.batch_for_step(0);
  const std::vector<const UtteranceRecord*> one{batch[0]};
  StepOptions o;
  o.force_random_speaker = batch[0]->speaker_id;
  o.teacher_forced_second = true;
  o.apply_update = false;
  const LossReport r = tr.training_step(one, 0, o);
  EXPECT_EQ(r.cycle_rt, 0.0);
}

TEST(TrainingStep, ZeroCycleWeightsIgnoreRandomSpeaker) {
  TrainConfig cfg = tiny_train_config();
  cfg.w_cyc1 = cfg.w_cyc2 = 0.0;
  StyleWeaverModel m1(cfg.model, cfg.seed), m2(cfg.model, cfg.seed);
  Trainer t1(m1, tiny_corpus(), cfg), t2(m2, tiny_corpus(), cfg);
  for (int step = 0; step < 5; ++step) {
    StepOptions a, b;
    a.force_random_speaker = 0;
    b.force_random_speaker = 3;
    EXPECT_TRUE(same_report(t1.training_step(step, a), t2.training_step(step, b)));
  }
  EXPECT_TRUE(same_params(m1.store, m2.store));
}

TEST(TrainingStep, RandomSpeakerForwardNeverTouchesReconstruction) {
  TrainConfig on = tiny_train_config();
  TrainConfig off = on;
  off.w_cyc1 = off.w_cyc2 = 0.0;
  StyleWeaverModel m1(on.model, on.seed), m2(off.model, off.seed);
  Trainer t1(m1, tiny_corpus(), on), t2(m2, tiny_corpus(), off);
  StepOptions o;
  o.apply_update = false;
  for (int step = 2; step < 5; ++step) {
    const LossReport a = t1.training_step(step, o);
    const LossReport b = t2.training_step(step, o);
    EXPECT_EQ(a.recon, b.recon);
    EXPECT_GT(a.cycle_rg, 0.0);
    EXPECT_EQ(b.cycle_rg, 0.0);
  }
}

TEST(TrainingStep, NonFiniteLossNamesTheTerm) {
  const TrainConfig cfg = tiny_train_config();
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  model.style_head.fc.bias->value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  // A random batch may hold no labelled utterance, in which case the masked
  // term never touches the head.
  std::vector<const UtteranceRecord*> batch;
  for (const UtteranceRecord& u : tiny_corpus().utterances) {
    if (u.style_label && batch.empty()) batch.push_back(&u);
  }
  ASSERT_EQ(batch.size(), 1u);
  try {
    tr.training_step(batch, 3);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("style_masked"), std::string::npos) << e.what();
  }
}

TEST(TrainingStep, BatchesAreDistinctWithinAStep) {
  TrainConfig cfg = tiny_train_config();
  cfg.batch_size = 8;
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  const auto b = tr.batch_for_step(11);
  std::set<const UtteranceRecord*> uniq(b.begin(), b.end());
  EXPECT_EQ(uniq.size(), b.size());
  for (const UtteranceRecord* u : b) EXPECT_EQ(split_of(u->utt_id), Split::kTrain);
  EXPECT_EQ(b, tr.batch_for_step(11));
}

TEST(Checkpoint, RoundTripIsBitExactAndForwardMatches) {
  const auto dir = swtest::scratch_dir("ckpt_rt");
  const TrainConfig cfg = tiny_train_config();
  StyleWeaverModel model(cfg.model, cfg.seed);
  Trainer tr(model, tiny_corpus(), cfg);
  for (int step = 0; step < 3; ++step) tr.training_step(step);
  save_checkpoint(dir / "m.swck", model.store, {{"step", 3}});

  StyleWeaverModel other(cfg.model, cfg.seed + 1);
  nn::Adam adam(other.store, {});  // register optimizer buffers too
  const auto meta = load_checkpoint(dir / "m.swck", other.store);
  EXPECT_EQ(meta.at("step"), 3);
  EXPECT_TRUE(same_params(model.store, other.store));

  const UtteranceRecord& u = *tr.batch_for_step(0)[0];
  auto forward = [&](const StyleWeaverModel& m) {
    Tape t;
    Var z = t.constant(m.extractor.posterior_mean(u.mel_matrix()));
    const ProsodyTargets tg = make_prosody_targets(u, tr.stats());
    Var mem = m.acoustic.encode_text(t, u.phonemes, m.acoustic.speaker_embedding(t, u.speaker_id),
                                     z, t.constant(tg.phone.leftCols(2)));
    DecodeOptions o;
    o.dropout_seed = 1;
    return Mat(m.acoustic.decode_teacher_forced(t, mem, t.constant(u.mel_matrix()), o).mel.value());
  };
  EXPECT_LE((forward(model) - forward(other)).cwiseAbs().maxCoeff(), 1e-6);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, LayoutAndCorruption) {
  const auto dir = swtest::scratch_dir("ckpt_bad");
  nn::ParameterStore store;
  Rng rng(1);
  store.create("a", 2, 3, nn::Init::kXavier, rng);
  store.create("b", 1, 4, nn::Init::kOnes, rng);
  save_checkpoint(dir / "c.swck", store, {{"k", "v"}});
  std::ifstream in(dir / "c.swck", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(bytes.substr(0, 4), "SWCK");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  EXPECT_EQ(version, kCheckpointVersion);
  EXPECT_EQ(read_checkpoint_metadata(dir / "c.swck").at("k"), "v");

  std::ofstream(dir / "t.swck", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  EXPECT_THROW(load_checkpoint(dir / "t.swck", store), FormatError);
  std::string magic = bytes;
  magic[1] = 'Z';
  std::ofstream(dir / "m.swck", std::ios::binary) << magic;
  EXPECT_THROW(read_checkpoint_metadata(dir / "m.swck"), FormatError);

  nn::ParameterStore bigger;
  bigger.create("a", 2, 3, nn::Init::kZeros, rng);
  bigger.create("b", 1, 4, nn::Init::kZeros, rng);
  bigger.create("c", 1, 1, nn::Init::kZeros, rng);
  EXPECT_THROW(load_checkpoint(dir / "c.swck", bigger), FormatError);
  nn::ParameterStore reshaped;
  reshaped.create("a", 3, 2, nn::Init::kZeros, rng);
  reshaped.create("b", 1, 4, nn::Init::kZeros, rng);
  EXPECT_THROW(load_checkpoint(dir / "c.swck", reshaped), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(RunTraining, LogsCheckpointsAndResume) {
  const auto dir = swtest::scratch_dir("run");
  TrainConfig cfg = tiny_train_config();
  cfg.total_steps = 7;
  cfg.log_interval = 3;
  cfg.checkpoint_interval = 4;
  const TrainResult full = run_training(tiny_corpus(), cfg, dir / "full");
  EXPECT_EQ(full.steps_run, 7);
  // ceil(7 / 3) rows plus the header
  EXPECT_EQ(lines(dir / "full" / "metrics.csv").size(), 1u + 3u);
  EXPECT_EQ(lines(dir / "full" / "metrics.csv")[0], kMetricsHeader);
  EXPECT_TRUE(std::filesystem::exists(dir / "full" / "ckpt_4.swck"));
  EXPECT_TRUE(std::filesystem::exists(dir / "full" / "final.swck"));
  EXPECT_TRUE(std::filesystem::exists(dir / "full" / "config.json"));
  EXPECT_EQ(lines(dir / "full" / "val.csv").size(), 2u);

  // Interrupted run: stop at the first checkpoint, then resume.
  std::filesystem::create_directories(dir / "resumed");
  std::filesystem::copy_file(dir / "full" / "ckpt_4.swck", dir / "resumed" / "latest.swck");
  const TrainResult resumed = run_training(tiny_corpus(), cfg, dir / "resumed");
  EXPECT_EQ(resumed.start_step, 4);
  EXPECT_EQ(resumed.steps_run, 3);
  EXPECT_TRUE(same_report(resumed.last, full.last));

  const LoadedModel a = load_model(dir / "full" / "final.swck");
  const LoadedModel b = load_model(dir / "resumed" / "final.swck");
  EXPECT_EQ(a.step, 7);
  EXPECT_TRUE(same_params(a.model->store, b.model->store));
  EXPECT_TRUE(a.metadata.contains("centroids"));
  EXPECT_EQ(a.stats, compute_speaker_stats(tiny_corpus(), Split::kTrain));
  std::filesystem::remove_all(dir);
}
