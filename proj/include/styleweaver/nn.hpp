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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "styleweaver/autograd.hpp"
#include "styleweaver/random.hpp"

namespace styleweaver::nn {

using ag::Mat;
using ag::Parameter;
using ag::Tape;
using ag::Var;

/// Rounds every entry to the nearest float32. Persistent state is kept on
/// the float32 grid so that float32 checkpoints reload bit-exactly.
void round_to_float(Mat& m);

enum class Init { kZeros, kOnes, kXavier, kKaiming };

/// Owns every parameter and buffer of a model, in creation order.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, ag::Index rows, ag::Index cols, Init init,
                    Rng& rng, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> index_;
};

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
         Init init = Init::kXavier);
  Var operator()(Tape& t, const Var& x, bool frozen = false) const;
  int in_features() const { return static_cast<int>(weight->value.rows()); }
  int out_features() const { return static_cast<int>(weight->value.cols()); }
};

struct Embedding {
  Parameter* table = nullptr;  // count x dim

  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, int count, int dim, Rng& rng);
  Var operator()(Tape& t, std::span<const int> ids, bool frozen = false) const;
  Var row(Tape& t, int id, bool frozen = false) const;
  int count() const { return static_cast<int>(table->value.rows()); }
  int dim() const { return static_cast<int>(table->value.cols()); }
};

/// Same-padded 1D convolution with bias.
struct Conv1d {
  Parameter* weight = nullptr;  // (K*Cin) x Cout
  Parameter* bias = nullptr;
  int kernel = 3;

  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, int in, int out, int kernel, Rng& rng);
  Var operator()(Tape& t, const Var& x, bool frozen = false) const;
};

/// 2D convolution without bias (always followed by normalization here).
struct Conv2d {
  Parameter* weight = nullptr;  // (K*K*Cin) x Cout
  int kernel = 3;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in, int out, int kernel,
         int stride, Rng& rng);
  /// x: (H*W) x Cin. Updates height/width to the output geometry.
  Var operator()(Tape& t, const Var& x, ag::Index& height, ag::Index& width,
                 bool frozen = false) const;
};

enum class NormMode { kTrain, kEval };

/// Per-channel batch normalization with running statistics.
struct BatchNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;  // buffers
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, int channels, Rng& rng);
  /// Training mode normalizes with statistics over all rows of x and folds
  /// them into the running buffers.
  Var operator()(Tape& t, const Var& x, NormMode mode, bool frozen = false) const;
};

struct Gru {
  Parameter* w = nullptr;   // in x 3H
  Parameter* u = nullptr;   // H x 3H
  Parameter* bw = nullptr;  // 1 x 3H
  Parameter* bu = nullptr;

  Gru() = default;
  Gru(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);
  Var step(Tape& t, const Var& x, const Var& h, bool frozen = false) const;
  /// Runs over rows of xs from a zero state; returns all hidden states (T x H).
  Var run(Tape& t, const Var& xs, bool frozen = false) const;
  int hidden() const { return static_cast<int>(u->value.rows()); }
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global norm; <= 0 disables
};

/// Adam with global-norm gradient clipping. Moment buffers live in the
/// parameter store (names "adam.m/<param>", "adam.v/<param>") so that they
/// are checkpointed alongside the weights.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);
  /// Applies one update from the accumulated gradients; returns the
  /// pre-clipping global gradient norm.
  double step();
  std::int64_t steps_taken() const;
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  ParameterStore* store_;
  AdamConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Parameter*> m_;
  std::vector<Parameter*> v_;
  Parameter* counter_ = nullptr;
};

}  // namespace styleweaver::nn
