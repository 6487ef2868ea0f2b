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
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "styleweaver/config_json.hpp"
#include "styleweaver/error.hpp"
#include "styleweaver/evaluation.hpp"
#include "styleweaver/training.hpp"
#include "test_util.hpp"

using namespace styleweaver;
namespace ag = styleweaver::ag;

namespace {

const Corpus& tiny_corpus() {
  static const Corpus c = generate_corpus(swtest::tiny_corpus_config(10), 31);
  return c;
}

StyleWeaverModel& tiny_model() {
  static StyleWeaverModel m(swtest::tiny_model_config(tiny_corpus().config), 6);
  return m;
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STYLEWEAVER_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json run_cli_json(const std::string& args, int* code) {
  const auto out = swtest::scratch_dir("cli_stdout") / "out.json";
  const std::string cmd = std::string(STYLEWEAVER_CLI) + " " + args + " > " + out.string();
  const int status = std::system(cmd.c_str());
  *code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  return nlohmann::json::parse(in, nullptr, false);
}

}  // namespace

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 4};
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-12);
  const std::vector<double> neg{-1, -2, -3};
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-12);
  EXPECT_NEAR(pearson(x, y), 0.9820, 1e-3);
  EXPECT_NEAR(pearson(x, y), pearson_oracle(x, y), 1e-12);
  const std::vector<double> flat{2, 2, 2};
  EXPECT_EQ(pearson(x, flat), 0.0);
  const std::vector<double> one{1};
  EXPECT_THROW(pearson(one, one), ValidationError);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(pearson(x, two), ValidationError);
}

TEST(Pearson, RangeAndAffineInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 30));
    std::vector<double> x(n), y(n), ax(n);
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-10, 10);
      y[i] = rng.uniform(-10, 10);
      ax[i] = a * x[i] + b;
    }
    const double r = pearson(x, y);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
    EXPECT_NEAR(r, pearson_oracle(x, y), 1e-9);
    if (std::abs(a) > 1e-3) {
      EXPECT_NEAR(pearson(x, ax), a > 0 ? 1.0 : -1.0, 1e-9);
    }
  }
}

TEST(ProsodyScore, PerfectPredictionsGiveOnes) {
  const ProsodyStats stats = compute_speaker_stats(tiny_corpus(), Split::kTrain);
  for (const UtteranceRecord* u : select_split(tiny_corpus(), Split::kTest)) {
    const ProsodyTargets tg = make_prosody_targets(*u, stats);
    PhonePrediction p;
    for (ag::Index i = 0; i < tg.phone.rows(); ++i) {
      p.pitch.push_back(tg.phone(i, 0));
      p.energy.push_back(tg.phone(i, 1));
      p.duration.push_back(u->durations[static_cast<std::size_t>(i)]);
    }
    const UtteranceProsodyScore s = score_utterance(p, *u, stats);
    EXPECT_NEAR(s.f0, 1.0, 1e-12) << u->utt_id;
    EXPECT_NEAR(s.energy, 1.0, 1e-12);
    // constant durations collapse to 0 by convention
    const bool flat = std::all_of(u->durations.begin(), u->durations.end(),
                                  [&](int d) { return d == u->durations[0]; });
    EXPECT_NEAR(s.duration, flat ? 0.0 : 1.0, 1e-12);
  }
}

TEST(ProsodyReport, UntrainedModelInRangeAndEmptySplitRejected) {
  const ProsodyStats stats = compute_speaker_stats(tiny_corpus(), Split::kTrain);
  const auto test = select_split(tiny_corpus(), Split::kTest);
  const ProsodyReport r = prosody_report(tiny_model(), test, stats);
  EXPECT_EQ(r.per_utterance.size(), test.size());
  for (double v : {r.f0, r.energy, r.duration}) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  const nlohmann::json j = to_json(r);
  EXPECT_EQ(j.at("per_utterance").size(), test.size());
  std::vector<const UtteranceRecord*> none;
  EXPECT_THROW(prosody_report(tiny_model(), none, stats), ValidationError);
}

TEST(Probes, SeparableAndNoise) {
  Rng rng(5);
  const int n = 400;
  Mat clustered(n, 8), noise(n, 8);
  std::vector<int> spk(n);
  std::vector<std::optional<int>> sty(n);
  std::unique_ptr<bool[]> train(new bool[n]);
  for (int i = 0; i < n; ++i) {
    spk[i] = i % 4;
    sty[i] = (i % 4 < 2) ? std::optional<int>((i / 4) % 3) : std::nullopt;
    train[i] = i % 5 != 0;
    for (int d = 0; d < 8; ++d) {
      noise(i, d) = rng.normal();
      clustered(i, d) = 0.1 * rng.normal();
    }
    clustered(i, spk[i]) += 3.0;
    if (sty[i]) clustered(i, 4 + *sty[i]) += 3.0;
  }
  const std::span<const bool> mask(train.get(), n);
  const ProbeResult sep = probe_classifiers(clustered, spk, sty, 4, 3, mask);
  EXPECT_GE(sep.speaker_accuracy, 0.99);
  EXPECT_GE(sep.style_accuracy, 0.99);
  EXPECT_DOUBLE_EQ(sep.speaker_chance, 0.25);
  EXPECT_NEAR(sep.style_chance, 1.0 / 3.0, 1e-12);
  const ProbeResult null = probe_classifiers(noise, spk, sty, 4, 3, mask);
  EXPECT_LT(null.speaker_accuracy, 0.25 + 0.2);
  EXPECT_LT(null.style_accuracy, 1.0 / 3.0 + 0.25);
  const ProbeResult again = probe_classifiers(noise, spk, sty, 4, 3, mask);
  EXPECT_EQ(null.speaker_accuracy, again.speaker_accuracy);
  EXPECT_EQ(null.style_accuracy, again.style_accuracy);
  EXPECT_TRUE(to_json(sep).contains("note"));
}

TEST(Probes, ClassMissingFromTrainSplit) {
  Mat x = Mat::Random(6, 2);
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const bool train[6] = {true, false, true, false, false, false};
  EXPECT_THROW(linear_probe(x, y, 3, std::span<const bool>(train, 6)), ValidationError);
}

TEST(Strength, OwnersTargetsAndReportShape) {
  const CorpusGenConfig& cc = tiny_corpus().config;
  EXPECT_EQ(style_owner(cc, "down"), 0);
  EXPECT_THROW(style_owner(cc, "angry"), LookupError);
  EXPECT_EQ(default_target(cc, 0), 2);
  EXPECT_EQ(default_target(cc, 2), 3);

  const ProsodyStats stats = compute_speaker_stats(tiny_corpus(), Split::kTrain);
  const CentroidMap cents = compute_centroids(tiny_model(), tiny_corpus());
  std::vector<std::vector<int>> sentences;
  for (const UtteranceRecord* u : select_split(tiny_corpus(), Split::kTest)) {
    sentences.push_back(u->phonemes);
  }
  const std::vector<double> scales{0.5, 1.0, 2.0};
  const StrengthReport r = strength_report(tiny_model(), cents, stats, cc, sentences, scales);
  ASSERT_EQ(r.styles.size(), 2u);  // neutral has no direction
  for (const StyleStrength& s : r.styles) {
    EXPECT_GE(s.accuracy, 0.0);
    EXPECT_LE(s.accuracy, 1.0);
    EXPECT_EQ(s.sentences, static_cast<int>(sentences.size()));
    EXPECT_TRUE(s.pitch_checked);
    EXPECT_TRUE(s.duration_checked);
  }
  EXPECT_EQ(r.at("down").source_speaker, 0);
  EXPECT_THROW(r.at("neutral"), LookupError);
  const std::vector<double> bad{1.0, 0.5};
  EXPECT_THROW(strength_report(tiny_model(), cents, stats, cc, sentences, bad), ValidationError);
}

TEST(Strength, PitchCriterionSkippedForFlatDirection) {
  CorpusGenConfig cc = tiny_corpus().config;
  cc.styles[0].dur_factor = 0.1;  // neutral now only moves duration
  const ProsodyStats stats = compute_speaker_stats(tiny_corpus(), Split::kTrain);
  const CentroidMap cents = compute_centroids(tiny_model(), tiny_corpus());
  const std::vector<std::vector<int>> sentences{{1, 2, 3, 4}};
  const std::vector<double> scales{0.5, 1.0, 2.0};
  const StrengthReport r = strength_report(tiny_model(), cents, stats, cc, sentences, scales);
  EXPECT_FALSE(r.at("neutral").pitch_checked);
  EXPECT_TRUE(r.at("neutral").duration_checked);
}

TEST(Trajectories, RowsAndCsvRoundTrip) {
  const ProsodyStats stats = compute_speaker_stats(tiny_corpus(), Split::kTrain);
  const CentroidMap cents = compute_centroids(tiny_model(), tiny_corpus());
  const std::vector<int> phones{5, 1, 7, 7, 2};
  const std::vector<double> scales{0.5, 1.0, 2.0};
  const auto rows = strength_trajectories(tiny_model(), cents, stats, tiny_corpus().config, phones,
                                          "up", scales);
  ASSERT_EQ(rows.size(), 3u * phones.size());
  const auto dir = swtest::scratch_dir("traj");
  write_trajectory_csv(dir / "t.csv", rows);
  std::ifstream in(dir / "t.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "phone_index,scale,pitch,energy,duration");
  const auto back = read_trajectory_csv(dir / "t.csv");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].phone_index, rows[i].phone_index);
    EXPECT_EQ(back[i].scale, rows[i].scale);
    EXPECT_EQ(back[i].duration, rows[i].duration);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", rows[i].pitch);
    EXPECT_EQ(back[i].pitch, std::strtod(buf, nullptr));
    // 9 significant digits identify a float exactly
    EXPECT_EQ(static_cast<float>(back[i].energy), static_cast<float>(rows[i].energy));
  }
  std::filesystem::remove_all(dir);
}

TEST(Cli, ExitCodesForBadInput) {
  const auto dir = swtest::scratch_dir("cli_bad");
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("gen-corpus"), 2);  // --out missing
  std::ofstream(dir / "bad.json") << R"({"utterances_per_speaker": 0})";
  EXPECT_EQ(run_cli("gen-corpus --config " + (dir / "bad.json").string() + " --out " +
                    (dir / "c").string()),
            2);
  std::ofstream(dir / "garbage.json") << "{not json";
  EXPECT_EQ(run_cli("gen-corpus --config " + (dir / "garbage.json").string() + " --out " +
                    (dir / "c").string()),
            2);
  EXPECT_EQ(run_cli("eval-strength --ckpt " + (dir / "missing.swck").string()), 3);
  std::ofstream(dir / "junk.swck") << "nope";
  EXPECT_EQ(run_cli("eval-strength --ckpt " + (dir / "junk.swck").string()), 3);
  EXPECT_EQ(run_cli("eval-prosody --ckpt x --corpus " + (dir / "nowhere").string()), 3);
  std::filesystem::remove_all(dir);
}

TEST(Cli, EndToEndTinyRun) {
  const auto dir = swtest::scratch_dir("cli_e2e");
  nlohmann::json corpus_cfg = corpus_config_to_json(swtest::tiny_corpus_config(40));
  std::ofstream(dir / "corpus.json") << corpus_cfg.dump();
  ASSERT_EQ(run_cli("gen-corpus --config " + (dir / "corpus.json").string() + " --out " +
                    (dir / "corpus").string() + " --seed 4"),
            0);

  TrainConfig tc;
  tc.model = swtest::tiny_model_config(swtest::tiny_corpus_config(40));
  tc.model.acoustic.decoder.max_decode_frames = 40;
  tc.stage1_steps = 1;
  tc.kl_anneal_start = 1;
  tc.kl_anneal_end = 2;
  tc.total_steps = 3;
  tc.batch_size = 2;
  tc.val_interval = 2;
  tc.val_utterances = 2;
  tc.checkpoint_interval = 2;
  std::ofstream(dir / "train.json") << train_config_to_json(tc).dump();
  const std::string corpus = " --corpus " + (dir / "corpus").string();
  ASSERT_EQ(run_cli("train --config " + (dir / "train.json").string() + corpus + " --out " +
                    (dir / "run").string() + " --no-cycle"),
            0);
  const std::string ckpt = " --ckpt " + (dir / "run" / "final.swck").string();

  int code = -1;
  const auto pros = run_cli_json("eval-prosody" + ckpt + corpus + " --split test", &code);
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(pros.contains("f0"));
  const auto str = run_cli_json("eval-strength" + ckpt + " --scales 0.5,1,2", &code);
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(str.contains("styles"));
  const auto probes = run_cli_json("eval-probes" + ckpt + corpus, &code);
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(probes.contains("speaker_accuracy"));

  std::ofstream(dir / "phones.txt") << "1 2 3 4 5\n";
  EXPECT_EQ(run_cli("synthesize" + ckpt + " --source-speaker 0 --target-speaker 2 --style down" +
                    " --scale 2 --phonemes " + (dir / "phones.txt").string() + " --out " +
                    (dir / "out.swf").string()),
            0);
  const FeatureFile f = read_feature_file(dir / "out.swf");
  EXPECT_GE(f.n_frames, 1);
  EXPECT_EQ(f.n_mels, 20);
  EXPECT_EQ(run_cli("synthesize" + ckpt + " --source-speaker 0 --target-speaker 2 --style angry" +
                    " --phonemes " + (dir / "phones.txt").string() + " --out " +
                    (dir / "o2.swf").string()),
            3);
  EXPECT_EQ(run_cli("synthesize" + ckpt + " --source-speaker 0 --target-speaker 2 --style up" +
                    " --scale -1 --phonemes " + (dir / "phones.txt").string() + " --out " +
                    (dir / "o3.swf").string()),
            3);

  EXPECT_EQ(run_cli("plot-strength" + ckpt + " --style down --out " + (dir / "p.csv").string()),
            0);
  const auto rows = read_trajectory_csv(dir / "p.csv");
  EXPECT_EQ(rows.size() % 3, 0u);

  // a corpus generated with a different seed does not match the checkpoint
  ASSERT_EQ(run_cli("gen-corpus --config " + (dir / "corpus.json").string() + " --out " +
                    (dir / "other").string() + " --seed 5"),
            0);
  EXPECT_EQ(run_cli("eval-probes" + ckpt + " --corpus " + (dir / "other").string()), 3);
  std::filesystem::remove_all(dir);
}
