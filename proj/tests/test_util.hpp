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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "styleweaver/autograd.hpp"
#include "styleweaver/corpus.hpp"
#include "styleweaver/model.hpp"
#include "styleweaver/random.hpp"

namespace swtest {

using styleweaver::ag::Mat;
using styleweaver::ag::Tape;
using styleweaver::ag::Var;

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Mat random_mat(styleweaver::Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                      double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Moves every trainable value off its init point. Zero biases feeding a
// zero input sit exactly on a ReLU kink, which finite differences misread.
inline void jitter_params(styleweaver::nn::ParameterStore& store, std::uint64_t seed,
                          double scale = 0.2) {
  styleweaver::Rng rng(seed);
  for (styleweaver::ag::Parameter* p : store.trainable()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.normal(0.0, scale);
  }
}

struct GradCheck {
  double max_abs = 0.0;
  double max_rel = 0.0;
};

// Central differences against the tape gradient, every input element.
inline GradCheck check_gradients(const GraphFn& f, const std::vector<Mat>& inputs,
                                 double h = 1e-5) {
  std::vector<Mat> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const Mat& m : inputs) vars.push_back(t.variable(m));
    Var out = f(t, vars);
    t.backward(out);
    for (const Var& v : vars) {
      analytic.push_back(v.grad().size() ? v.grad() : Mat::Zero(v.rows(), v.cols()));
    }
  }
  auto eval = [&](const std::vector<Mat>& xs) {
    Tape t;
    std::vector<Var> vars;
    for (const Mat& m : xs) vars.push_back(t.constant(m));
    return f(t, vars).item();
  };
  GradCheck out;
  std::vector<Mat> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k].data()[i];
      xs[k].data()[i] = orig + h;
      const double up = eval(xs);
      xs[k].data()[i] = orig - h;
      const double down = eval(xs);
      xs[k].data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].data()[i];
      const double diff = std::abs(a - numeric);
      out.max_abs = std::max(out.max_abs, diff);
      out.max_rel = std::max(out.max_rel, diff / std::max(1e-3, std::abs(a) + std::abs(numeric)));
    }
  }
  return out;
}

// Small corpus and model for fast end-to-end tests.
inline styleweaver::CorpusGenConfig tiny_corpus_config(int utterances = 20) {
  styleweaver::CorpusGenConfig c = styleweaver::CorpusGenConfig::defaults();
  c.utterances_per_speaker = utterances;
  c.min_phones = 4;
  c.max_phones = 7;
  c.base_duration_mean = 4.0;
  c.base_duration_std = 1.0;
  c.min_base_duration = 2;
  return c;
}

inline styleweaver::ModelConfig tiny_model_config(const styleweaver::CorpusGenConfig& corpus) {
  styleweaver::ModelConfig m;
  m.reference.channels = {4, 4, 8, 8, 8, 8};
  m.reference.se_reduction = 4;
  m.reference.summarizer_hidden = 8;
  m.reference.embedding_dim = 8;
  m.predictor.phone_dim = 8;
  m.predictor.speaker_dim = 4;
  m.predictor.channels = 8;
  m.predictor.frame_channels = 8;
  m.acoustic.phone_dim = 8;
  m.acoustic.speaker_dim = 4;
  m.acoustic.encoder_dim = 8;
  m.acoustic.decoder.hidden = 16;
  m.acoustic.decoder.prenet_dim = 8;
  m.acoustic.decoder.attention_dim = 8;
  m.acoustic.decoder.max_decode_frames = 200;
  m.bind_to_corpus(corpus);
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("styleweaver_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace swtest
