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

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records one forward pass; backward() replays it in
// reverse and accumulates gradients into the Parameters it touched.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace styleweaver::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Persistent tensor. Non-trainable parameters are buffers (e.g. running
/// normalization statistics): saved with checkpoints, skipped by optimizers.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Mat& value() const;
  /// Empty matrix if no gradient reached this node.
  const Mat& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf that receives a gradient (tests, probes).
  Var variable(Mat value);
  /// Trainable use of a parameter; gradient flows back into p.grad.
  Var param(Parameter& p);
  /// Use of a parameter's current value with the gradient stopped.
  Var frozen(Parameter& p);
  Var param(Parameter& p, bool frozen_use) {
    return frozen_use ? frozen(p) : param(p);
  }

  /// Records an op result. The node requires a gradient iff any input does;
  /// otherwise the backward closure is dropped.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Mat value, std::span<const Var> inputs, Backward fn);

  /// Seeds d(root)/d(root) = 1 (root must be 1x1) and back-propagates.
  void backward(const Var& root);

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <typename Expr>
  void accumulate(int id, const Eigen::MatrixBase<Expr>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> trainable_;
  std::unordered_map<const Parameter*, int> frozen_;
};

// ---- elementwise and linear algebra -------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a (N x C) + row (1 x C) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (N x C) * row (1 x C) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
Var add_scalar(const Var& a, double c);
Var scale(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Index rows, Index cols);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
/// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);
/// Forward identity; backward multiplies the upstream gradient by -lambda.
Var grl(const Var& a, double lambda);
/// Multiplies by a fixed (already rescaled) mask.
Var dropout(const Var& a, const Mat& mask);
/// Forward identity, gradient blocked.
Var detach(const Var& a);

// ---- structure ----------------------------------------------------------

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Index begin, Index count);
Var slice_cols(const Var& a, Index begin, Index count);
/// row (1 x C) repeated n times.
Var broadcast_rows(const Var& row, Index n);
/// Output row i = a.row(index[i]); duplicates scatter-add in backward.
Var gather_rows(const Var& a, std::span<const int> index);
/// Mean of consecutive row segments of the given lengths.
Var segment_mean(const Var& a, std::span<const int> lengths);

// ---- reductions and losses ---------------------------------------------

Var mean_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of 1x1 scalars.
Var add_n(std::span<const Var> scalars);
Var softmax_rows(const Var& a);
/// Cross-entropy of a 1 x K logit row against a class index.
Var cross_entropy(const Var& logits, int label);
Var mse(const Var& a, const Var& b);
Var l1(const Var& a, const Var& b);
/// Mean binary cross-entropy of logits against constant 0/1 targets.
Var bce_with_logits(const Var& logits, const Mat& targets);

// ---- layers with fused backward ----------------------------------------

/// "Same"-padded 1D convolution over rows. x: T x Cin, w: (K*Cin) x Cout.
Var conv1d(const Var& x, const Var& w, int kernel);

struct Conv2dGeometry {
  Index height = 0;
  Index width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  Index out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  Index out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// x: (H*W) x Cin positions in row-major (h, w) order; w: (K*K*Cin) x Cout.
Var conv2d(const Var& x, const Var& w, const Conv2dGeometry& geom);

/// Normalizes each column with statistics over all rows. Writes the batch
/// mean and (biased) variance for running-statistics updates.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps,
               Mat* batch_mean, Mat* batch_var);

/// GRU cell (gate order r, z, n). x: 1 x In, h: 1 x H, w: In x 3H,
/// u: H x 3H, bw / bu: 1 x 3H.
Var gru_cell(const Var& x, const Var& h, const Var& w, const Var& u,
             const Var& bw, const Var& bu);

}  // namespace styleweaver::ag
