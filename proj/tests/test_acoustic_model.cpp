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
#include <limits>

#include "styleweaver/acoustic_model.hpp"
#include "styleweaver/error.hpp"
#include "test_util.hpp"

using namespace styleweaver;
namespace ag = styleweaver::ag;

namespace {

AcousticConfig small_config(int frames_per_step = 1) {
  AcousticConfig c;
  c.n_phonemes = 12;
  c.n_speakers = 3;
  c.n_mels = 5;
  c.phone_dim = 6;
  c.speaker_dim = 3;
  c.style_dim = 4;
  c.encoder_dim = 6;
  c.decoder.hidden = 10;
  c.decoder.prenet_dim = 6;
  c.decoder.attention_dim = 5;
  c.decoder.max_decode_frames = 50;
  c.decoder.frames_per_step = frames_per_step;
  return c;
}

struct AcousticFixture {
  nn::ParameterStore store;
  AcousticModel model;
  explicit AcousticFixture(AcousticConfig cfg = small_config()) {
    Rng rng(21);
    model = AcousticModel(store, cfg, rng);
  }
  Var memory(Tape& t, std::span<const int> phones, int speaker, const Mat& style) const {
    Rng rng(static_cast<std::uint64_t>(phones.size()));
    const Mat pros = swtest::random_mat(rng, static_cast<ag::Index>(phones.size()), 2);
    return model.encode_text(t, phones, model.speaker_embedding(t, speaker), t.constant(style),
                             t.constant(pros));
  }
};

}  // namespace

TEST(AcousticModel, MemoryShapeAndConditioning) {
  AcousticFixture f;
  Tape t;
  const std::vector<int> phones{0, 1, 2, 3, 4, 5, 6, 7, 8};
  const Mat zero_style = Mat::Zero(1, 4);
  const Var m0 = f.memory(t, phones, 0, zero_style);
  const Var m1 = f.memory(t, phones, 1, zero_style);
  EXPECT_EQ(m0.rows(), 9);
  EXPECT_EQ(m0.cols(), f.model.config().memory_dim());
  EXPECT_TRUE(m0.value().allFinite());
  EXPECT_EQ(m1.rows(), m0.rows());
  EXPECT_EQ(m1.cols(), m0.cols());
  EXPECT_NE(m0.value(), m1.value());
}

TEST(AcousticModel, EncodeTextShapeErrors) {
  AcousticFixture f;
  Tape t;
  const std::vector<int> phones{1, 2, 3};
  Var spk = f.model.speaker_embedding(t, 0);
  Var style = t.constant(Mat::Zero(1, 4));
  EXPECT_THROW(f.model.encode_text(t, phones, spk, style, t.constant(Mat::Zero(2, 2))),
               ShapeError);
  EXPECT_THROW(f.model.encode_text(t, phones, spk, t.constant(Mat::Zero(1, 3)),
                                   t.constant(Mat::Zero(3, 2))),
               ShapeError);
  EXPECT_THROW(f.model.speaker_embedding(t, 3), LookupError);
}

TEST(AcousticModel, TeacherForcedShapesAlignmentAndDeterminism) {
  for (int r : {1, 3}) {
    AcousticFixture f(small_config(r));
    Rng rng(5);
    const std::vector<int> phones{3, 1, 4, 1, 5};
    const Mat gt = swtest::random_mat(rng, 17, 5, 0, 1);
    auto run = [&](std::uint64_t seed) {
      Tape t;
      const Var mem = f.memory(t, phones, 2, Mat::Constant(1, 4, 0.1));
      DecodeOptions o;
      o.dropout_seed = seed;
      DecodeResult d = f.model.decode_teacher_forced(t, mem, t.constant(gt), o);
      return std::make_pair(Mat(d.mel.value()), d);
    };
    const auto [mel_a, a] = run(9);
    const auto [mel_b, b] = run(9);
    const auto [mel_c, c] = run(10);
    EXPECT_EQ(mel_a.rows(), 17);
    EXPECT_EQ(mel_a.cols(), 5);
    EXPECT_EQ(a.steps, (17 + r - 1) / r);
    EXPECT_EQ(mel_a, mel_b);
    EXPECT_NE(mel_a, mel_c);  // different dropout masks
    ASSERT_EQ(a.alignments.rows(), 17);
    ASSERT_EQ(a.alignments.cols(), 5);
    for (ag::Index i = 0; i < a.alignments.rows(); ++i) {
      EXPECT_NEAR(a.alignments.row(i).sum(), 1.0, 1e-5);
      EXPECT_TRUE((a.alignments.row(i).array() >= 0.0).all());
    }
  }
}

TEST(AcousticModel, TeacherForcingUsesOnlyPastFrames) {
  AcousticFixture f;
  Rng rng(6);
  const std::vector<int> phones{2, 7, 1};
  Mat gt = swtest::random_mat(rng, 8, 5, 0, 1);
  auto run = [&](const Mat& target) {
    Tape t;
    const Var mem = f.memory(t, phones, 0, Mat::Zero(1, 4));
    DecodeOptions o;
    o.dropout = false;
    return Mat(f.model.decode_teacher_forced(t, mem, t.constant(target), o).mel.value());
  };
  const Mat before = run(gt);
  gt.row(5).setConstant(3.0);
  const Mat after = run(gt);
  EXPECT_EQ(before.topRows(6), after.topRows(6));
  EXPECT_NE(before.row(6), after.row(6));
}

TEST(AcousticModel, FreeDecodeCapAndStopSemantics) {
  AcousticFixture f;
  Tape t;
  const std::vector<int> phones{1, 2, 3, 4};
  const Var mem = f.memory(t, phones, 1, Mat::Zero(1, 4));
  DecodeOptions never;
  never.stop_hook = [](int, double) { return -std::numeric_limits<double>::infinity(); };
  const DecodeResult capped = f.model.decode_free(t, mem, 10, never);
  EXPECT_EQ(capped.mel.rows(), 10);
  EXPECT_TRUE(capped.truncated);
  EXPECT_TRUE(capped.mel.value().allFinite());

  DecodeOptions third;
  third.stop_hook = [](int step, double) {
    return step == 2 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
  };
  const DecodeResult three = f.model.decode_free(t, mem, 10, third);
  EXPECT_EQ(three.mel.rows(), 3);
  EXPECT_FALSE(three.truncated);
  for (ag::Index i = 0; i < three.alignments.rows(); ++i) {
    EXPECT_NEAR(three.alignments.row(i).sum(), 1.0, 1e-5);
  }
  EXPECT_THROW(f.model.decode_free(t, mem, 0, never), ShapeError);
}

TEST(AcousticModel, UntrainedFreeDecodeIsFinite) {
  AcousticFixture f;
  Tape t;
  const std::vector<int> phones{5, 6};
  const Var mem = f.memory(t, phones, 2, Mat::Constant(1, 4, -0.5));
  const DecodeResult d = f.model.decode_free(t, mem, 50, DecodeOptions{});
  EXPECT_GE(d.mel.rows(), 1);
  EXPECT_LE(d.mel.rows(), 50);
  EXPECT_TRUE(d.mel.value().allFinite());
}

TEST(AcousticModel, FreeDecodeWithMultiFrameSteps) {
  AcousticFixture f(small_config(4));
  Tape t;
  const std::vector<int> phones{1, 2, 3};
  const Var mem = f.memory(t, phones, 0, Mat::Zero(1, 4));
  DecodeOptions never;
  never.stop_hook = [](int, double) { return -1.0; };
  EXPECT_EQ(f.model.decode_free(t, mem, 10, never).mel.rows(), 10);
  DecodeOptions first;
  first.stop_hook = [](int, double) { return 1.0; };
  EXPECT_EQ(f.model.decode_free(t, mem, 10, first).mel.rows(), 4);
}

TEST(StopTargets, LastStepIsOne) {
  const Mat a = stop_targets(5, 1);
  EXPECT_EQ(a.rows(), 5);
  EXPECT_EQ(a.sum(), 1.0);
  EXPECT_EQ(a(4, 0), 1.0);
  const Mat b = stop_targets(10, 4);
  EXPECT_EQ(b.rows(), 3);
  EXPECT_EQ(b(2, 0), 1.0);
}

TEST(ReconstructionLoss, Examples) {
  Rng rng(7);
  const Mat gt = swtest::random_mat(rng, 6, 5);
  const Mat stop = stop_targets(6, 1);
  Mat exact_logits = Mat::Constant(6, 1, -60.0);
  exact_logits(5, 0) = 60.0;
  Tape t;
  const double zero =
      reconstruction_loss(t.constant(gt), t.constant(gt), t.constant(exact_logits), stop).item();
  EXPECT_NEAR(zero, 0.0, 1e-20);
  const Mat plus = gt.array() + 1.0;
  const double one =
      reconstruction_loss(t.constant(plus), t.constant(gt), t.constant(exact_logits), stop).item();
  EXPECT_NEAR(one, 1.0, 1e-12);
  EXPECT_THROW(reconstruction_loss(t.constant(gt.topRows(5)), t.constant(gt),
                                   t.constant(exact_logits), stop),
               ShapeError);
}

TEST(ReconstructionLoss, MatchesLoopOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(1, 20));
    const Mat a = swtest::random_mat(rng, T, 5, -3, 3);
    const Mat b = swtest::random_mat(rng, T, 5, -3, 3);
    const Mat logits = swtest::random_mat(rng, T, 1, -4, 4);
    const Mat stop = stop_targets(T, 1);
    double l1 = 0.0;
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < 5; ++j) l1 += std::abs(a(i, j) - b(i, j));
    }
    l1 /= T * 5.0;
    double bce = 0.0;
    for (int i = 0; i < T; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-logits(i, 0)));
      bce += -(stop(i, 0) * std::log(p) + (1 - stop(i, 0)) * std::log(1 - p));
    }
    bce /= T;
    Tape t;
    const double got =
        reconstruction_loss(t.constant(a), t.constant(b), t.constant(logits), stop).item();
    EXPECT_NEAR(got, l1 + bce, 1e-6);
  }
}

TEST(AcousticModel, ParameterGradients) {
  AcousticFixture f(small_config(2));
  Rng rng(9);
  const std::vector<int> phones{4, 2, 8};
  const Mat gt = swtest::random_mat(rng, 5, 5, 0, 1);
  const Mat style = swtest::random_mat(rng, 1, 4);
  swtest::jitter_params(f.store, 17);
  auto loss = [&](Tape& t) {
    const Var mem = f.memory(t, phones, 1, style);
    DecodeOptions o;
    o.dropout_seed = 4;
    const DecodeResult d = f.model.decode_teacher_forced(t, mem, t.constant(gt), o);
    return reconstruction_loss(d.mel, t.constant(gt), d.stop_logits, stop_targets(5, 2));
  };
  f.store.zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  double worst = 0.0;
  for (ag::Parameter* p : f.store.trainable()) {
    for (ag::Index i = 0; i < std::min<ag::Index>(p->value.size(), 5); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + 1e-6;
      Tape a;
      const double up = loss(a).item();
      p->value.data()[i] = orig - 1e-6;
      Tape b;
      const double down = loss(b).item();
      p->value.data()[i] = orig;
      const double num = (up - down) / 2e-6;
      const double ana = p->grad.data()[i];
      const double rel = std::abs(num - ana) / std::max(1e-3, std::abs(num) + std::abs(ana));
      worst = std::max(worst, rel);
    }
  }
  // L1 has kinks; the tolerance leaves room for the odd crossing.
  EXPECT_LT(worst, 1e-3);
}

TEST(DecoderConfig, Validation) {
  AcousticConfig c = small_config();
  c.decoder.max_decode_frames = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.decoder.attention = "location";
  EXPECT_THROW(c.validate(), ConfigError);
}
