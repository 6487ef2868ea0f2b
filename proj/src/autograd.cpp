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

#include "styleweaver/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "styleweaver/error.hpp"

namespace styleweaver::ag {

const Mat& Var::value() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (!p.trainable) return frozen(p);
  auto it = trainable_.find(&p);
  if (it != trainable_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, Mat(), true, nullptr, &p});
  const int id = static_cast<int>(nodes_.size()) - 1;
  trainable_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::frozen(Parameter& p) {
  auto it = frozen_.find(&p);
  if (it != frozen_.end()) return Var(this, it->second);
  Var v = constant(p.value);
  frozen_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Mat value, std::span<const Var> inputs, Backward fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw PreconditionError("autograd: input from another tape");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs, needs ? std::move(fn) : nullptr,
                        nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw PreconditionError("autograd: root from another tape");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("autograd: backward root must be a 1x1 scalar");
  }
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root.id(), Mat::Ones(1, 1));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()) + ")");
  }
}

Mat scalar_mat(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Mat out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Mat out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Mat out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bad row shape");
  Mat out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: bad row shape");
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  const int ia = a.id(), ir = row.id();
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Mat ga = g.array().rowwise() * t.value(ir).row(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ir)) {
      t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
    }
  });
}

Var add_scalar(const Var& a, double c) {
  Mat out = a.value().array() + c;
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a},
                          [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var scale(const Var& a, double c) {
  Mat out = a.value() * c;
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a},
                          [ia, c](Tape& t, int self) { t.accumulate(ia, t.grad(self) * c); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Mat out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  Mat out = a.value().transpose();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count differs");
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const int ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, r0, c0](Tape& t, int self) {
    t.accumulate(ia, Eigen::Map<const Mat>(t.grad(self).data(), r0, c0));
  });
}

Var relu(const Var& a) {
  Mat out = a.value().cwiseMax(0.0);
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    Mat g = (t.value(ia).array() > 0.0).select(t.grad(self), 0.0);
    t.accumulate(ia, g);
  });
}

Var sigmoid(const Var& a) {
  Mat out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto s = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(const Var& a) {
  Mat out = a.value().array().tanh().matrix();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * (1.0 - y * y)).matrix());
  });
}

Var exp(const Var& a) {
  Mat out = a.value().array().exp().matrix();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var square(const Var& a) {
  Mat out = a.value().array().square().matrix();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, (2.0 * t.grad(self).array() * t.value(ia).array()).matrix());
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Mat out = a.value().cwiseMax(lo).cwiseMin(hi);
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, lo, hi](Tape& t, int self) {
    const auto x = t.value(ia).array();
    Mat g = (x > lo && x < hi).select(t.grad(self), 0.0);
    t.accumulate(ia, g);
  });
}

Var grl(const Var& a, double lambda) {
  Mat out = a.value();
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, lambda](Tape& t, int self) {
    t.accumulate(ia, t.grad(self) * (-lambda));
  });
}

Var dropout(const Var& a, const Mat& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("dropout: mask shape mismatch");
  }
  Mat out = a.value().cwiseProduct(mask);
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, mask](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

Var detach(const Var& a) { return a.tape()->constant(a.value()); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts[0].tape()->record(
      std::move(out), parts, [ids, offsets](Tape& t, int self) {
        const Mat& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          t.accumulate(ids[k], g.middleCols(offsets[k], t.value(ids[k]).cols()));
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts[0].tape()->record(
      std::move(out), parts, [ids, offsets](Tape& t, int self) {
        const Mat& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          t.accumulate(ids[k], g.middleRows(offsets[k], t.value(ids[k]).rows()));
        }
      });
}

Var slice_rows(const Var& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: range out of bounds");
  }
  Mat out = a.value().middleRows(begin, count);
  const int ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return a.tape()->record(std::move(out), {a},
                          [ia, begin, count, rows, cols](Tape& t, int self) {
                            Mat g = Mat::Zero(rows, cols);
                            g.middleRows(begin, count) = t.grad(self);
                            t.accumulate(ia, g);
                          });
}

Var slice_cols(const Var& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: range out of bounds");
  }
  Mat out = a.value().middleCols(begin, count);
  const int ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return a.tape()->record(std::move(out), {a},
                          [ia, begin, count, rows, cols](Tape& t, int self) {
                            Mat g = Mat::Zero(rows, cols);
                            g.middleCols(begin, count) = t.grad(self);
                            t.accumulate(ia, g);
                          });
}

Var broadcast_rows(const Var& row, Index n) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows: input must be a single row");
  Mat out = row.value().replicate(n, 1);
  const int ir = row.id();
  return row.tape()->record(std::move(out), {row}, [ir](Tape& t, int self) {
    t.accumulate(ir, t.grad(self).colwise().sum());
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  const Index n = static_cast<Index>(index.size());
  Mat out(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    const int src = index[i];
    if (src < 0 || src >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(i) = a.value().row(src);
  }
  const int ia = a.id();
  const Index rows = a.rows();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->record(std::move(out), {a}, [ia, rows, idx](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat ga = Mat::Zero(rows, g.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(ia, ga);
  });
}

Var segment_mean(const Var& a, std::span<const int> lengths) {
  Index total = 0;
  for (int len : lengths) {
    if (len < 1) throw ValidationError("segment_mean: segment length must be >= 1");
    total += len;
  }
  if (total != a.rows()) {
    throw ShapeError("segment_mean: lengths sum to " + std::to_string(total) + " but input has " +
                     std::to_string(a.rows()) + " rows");
  }
  Mat out(static_cast<Index>(lengths.size()), a.cols());
  Index off = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    // shifted by the first row so constant segments come back bit-exact
    const auto seg = a.value().middleRows(off, lengths[i]);
    out.row(static_cast<Index>(i)) =
        seg.row(0) + (seg.rowwise() - seg.row(0)).colwise().sum() / static_cast<double>(lengths[i]);
    off += lengths[i];
  }
  const int ia = a.id();
  std::vector<int> lens(lengths.begin(), lengths.end());
  const Index rows = a.rows();
  return a.tape()->record(std::move(out), {a}, [ia, lens, rows](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat ga(rows, g.cols());
    Index o = 0;
    for (std::size_t i = 0; i < lens.size(); ++i) {
      ga.middleRows(o, lens[i]).rowwise() = g.row(static_cast<Index>(i)) / lens[i];
      o += lens[i];
    }
    t.accumulate(ia, ga);
  });
}

Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  Mat out = a.value().colwise().sum() / n;
  const int ia = a.id();
  const Index rows = a.rows();
  return a.tape()->record(std::move(out), {a}, [ia, rows, n](Tape& t, int self) {
    t.accumulate(ia, (t.grad(self) / n).replicate(rows, 1));
  });
}

Var sum(const Var& a) {
  Mat out = scalar_mat(a.value().sum());
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape& t, int self) {
    t.accumulate(ia, Mat::Constant(r, c, t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var add_n(std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("add_n: no inputs");
  double acc = 0.0;
  std::vector<int> ids;
  for (const Var& s : scalars) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("add_n: inputs must be 1x1");
    acc += s.item();
    ids.push_back(s.id());
  }
  return scalars[0].tape()->record(scalar_mat(acc), scalars, [ids](Tape& t, int self) {
    for (int id : ids) t.accumulate(id, t.grad(self));
  });
}

Var softmax_rows(const Var& a) {
  Mat out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const int ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    Mat ga(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      ga.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    t.accumulate(ia, ga);
  });
}

Var cross_entropy(const Var& logits, int label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: logits must be one row");
  if (label < 0 || label >= logits.cols()) {
    throw ValidationError("cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(logits.cols()) + " classes");
  }
  const auto row = logits.value().row(0).array();
  const double m = row.maxCoeff();
  const double lse = m + std::log((row - m).exp().sum());
  Mat probs = (row - lse).exp().matrix();
  const int il = logits.id();
  return logits.tape()->record(
      scalar_mat(lse - row(label)), {logits}, [il, label, probs](Tape& t, int self) {
        Mat g = probs;
        g(0, label) -= 1.0;
        t.accumulate(il, g * t.grad(self)(0, 0));
      });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const double n = static_cast<double>(a.value().size());
  Mat diff = a.value() - b.value();
  const double v = diff.squaredNorm() / n;
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(scalar_mat(v), {a, b}, [ia, ib, diff, n](Tape& t, int self) {
    const double g = t.grad(self)(0, 0) * 2.0 / n;
    t.accumulate(ia, diff * g);
    t.accumulate(ib, diff * (-g));
  });
}

Var l1(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1");
  const double n = static_cast<double>(a.value().size());
  Mat sign = (a.value() - b.value()).array().sign().matrix();
  const double v = (a.value() - b.value()).cwiseAbs().sum() / n;
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(scalar_mat(v), {a, b}, [ia, ib, sign, n](Tape& t, int self) {
    const double g = t.grad(self)(0, 0) / n;
    t.accumulate(ia, sign * g);
    t.accumulate(ib, sign * (-g));
  });
}

Var bce_with_logits(const Var& logits, const Mat& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeError("bce_with_logits: target shape mismatch");
  }
  const double n = static_cast<double>(targets.size());
  const auto x = logits.value().array();
  // max(x,0) - x*y + log(1 + exp(-|x|))
  const double v =
      ((x.max(0.0) - x * targets.array() + (1.0 + (-x.abs()).exp()).log()).sum()) / n;
  Mat grad = ((1.0 / (1.0 + (-x).exp())) - targets.array()).matrix() / n;
  const int il = logits.id();
  return logits.tape()->record(scalar_mat(v), {logits}, [il, grad](Tape& t, int self) {
    t.accumulate(il, grad * t.grad(self)(0, 0));
  });
}

Var conv1d(const Var& x, const Var& w, int kernel) {
  const Index T = x.rows(), cin = x.cols();
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("conv1d: kernel must be odd");
  if (w.rows() != kernel * cin) {
    throw ShapeError("conv1d: weight rows " + std::to_string(w.rows()) + " != kernel*Cin " +
                     std::to_string(kernel * cin));
  }
  const int pad = (kernel - 1) / 2;
  Mat cols = Mat::Zero(T, kernel * cin);
  for (Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t - pad + k;
      if (src < 0 || src >= T) continue;
      cols.block(t, k * cin, 1, cin) = x.value().row(src);
    }
  }
  Mat out = cols * w.value();
  const int ix = x.id(), iw = w.id();
  return x.tape()->record(
      std::move(out), {x, w}, [ix, iw, cols, kernel, pad, T, cin](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(iw)) t.accumulate(iw, cols.transpose() * g);
        if (t.requires_grad(ix)) {
          Mat dcols = g * t.value(iw).transpose();
          Mat dx = Mat::Zero(T, cin);
          for (Index tt = 0; tt < T; ++tt) {
            for (int k = 0; k < kernel; ++k) {
              const Index src = tt - pad + k;
              if (src < 0 || src >= T) continue;
              dx.row(src) += dcols.block(tt, k * cin, 1, cin);
            }
          }
          t.accumulate(ix, dx);
        }
      });
}

Var conv2d(const Var& x, const Var& w, const Conv2dGeometry& geom) {
  const Index cin = x.cols();
  if (x.rows() != geom.height * geom.width) throw ShapeError("conv2d: input size mismatch");
  const Index kk = static_cast<Index>(geom.kernel) * geom.kernel;
  if (w.rows() != kk * cin) throw ShapeError("conv2d: weight rows != K*K*Cin");
  const Index oh = geom.out_height(), ow = geom.out_width();
  if (oh < 1 || ow < 1) throw ShapeError("conv2d: empty output");
  // Precompute the source row of every (output position, kernel tap) pair.
  std::vector<int> src(static_cast<std::size_t>(oh * ow * kk), -1);
  for (Index r = 0; r < oh; ++r) {
    for (Index c = 0; c < ow; ++c) {
      for (int kh = 0; kh < geom.kernel; ++kh) {
        for (int kw = 0; kw < geom.kernel; ++kw) {
          const Index ih = r * geom.stride - geom.pad + kh;
          const Index iw = c * geom.stride - geom.pad + kw;
          if (ih < 0 || ih >= geom.height || iw < 0 || iw >= geom.width) continue;
          src[static_cast<std::size_t>((r * ow + c) * kk + kh * geom.kernel + kw)] =
              static_cast<int>(ih * geom.width + iw);
        }
      }
    }
  }
  Mat cols = Mat::Zero(oh * ow, kk * cin);
  for (Index p = 0; p < oh * ow; ++p) {
    for (Index k = 0; k < kk; ++k) {
      const int s = src[static_cast<std::size_t>(p * kk + k)];
      if (s >= 0) cols.block(p, k * cin, 1, cin) = x.value().row(s);
    }
  }
  Mat out = cols * w.value();
  const int ix = x.id(), iw = w.id();
  const Index in_rows = x.rows();
  return x.tape()->record(
      std::move(out), {x, w},
      [ix, iw, cols, src, kk, cin, in_rows](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(iw)) t.accumulate(iw, cols.transpose() * g);
        if (t.requires_grad(ix)) {
          Mat dcols = g * t.value(iw).transpose();
          Mat dx = Mat::Zero(in_rows, cin);
          for (Index p = 0; p < dcols.rows(); ++p) {
            for (Index k = 0; k < kk; ++k) {
              const int s = src[static_cast<std::size_t>(p * kk + k)];
              if (s >= 0) dx.row(s) += dcols.block(p, k * cin, 1, cin);
            }
          }
          t.accumulate(ix, dx);
        }
      });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps, Mat* batch_mean,
               Mat* batch_var) {
  const Index n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) throw ShapeError("batch_norm: channel mismatch");
  Mat mu = x.value().colwise().mean();
  Mat centered = x.value().rowwise() - mu.row(0);
  Mat var = centered.array().square().colwise().sum() / static_cast<double>(n);
  Mat inv_std = (var.array() + eps).rsqrt().matrix();
  Mat xhat = centered.array().rowwise() * inv_std.row(0).array();
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
  if (batch_mean != nullptr) *batch_mean = mu;
  if (batch_var != nullptr) *batch_var = var;
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat, inv_std, n](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ix)) {
          Mat dxhat = g.array().rowwise() * t.value(ig).row(0).array();
          Mat sum_d = dxhat.colwise().sum();
          Mat sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Mat dx = (static_cast<double>(n) * dxhat.array()).rowwise() - sum_d.row(0).array();
          dx = dx.array() - xhat.array().rowwise() * sum_dx.row(0).array();
          dx = dx.array().rowwise() * (inv_std.row(0).array() / static_cast<double>(n));
          t.accumulate(ix, dx);
        }
      });
}

Var gru_cell(const Var& x, const Var& h, const Var& w, const Var& u, const Var& bw,
             const Var& bu) {
  const Index hid = h.cols();
  if (x.rows() != 1 || h.rows() != 1) throw ShapeError("gru_cell: inputs must be single rows");
  if (w.rows() != x.cols() || w.cols() != 3 * hid || u.rows() != hid || u.cols() != 3 * hid) {
    throw ShapeError("gru_cell: weight shape mismatch");
  }
  Mat gx = x.value() * w.value() + bw.value();
  Mat gh = h.value() * u.value() + bu.value();
  auto sig = [](const auto& v) { return (1.0 / (1.0 + (-v).exp())).matrix(); };
  Mat r = sig((gx.leftCols(hid) + gh.leftCols(hid)).array());
  Mat z = sig((gx.middleCols(hid, hid) + gh.middleCols(hid, hid)).array());
  Mat ghn = gh.rightCols(hid);
  Mat n = (gx.rightCols(hid).array() + r.array() * ghn.array()).tanh().matrix();
  Mat out = ((1.0 - z.array()) * n.array() + z.array() * h.value().array()).matrix();
  const int ix = x.id(), ih = h.id(), iw = w.id(), iu = u.id(), ibw = bw.id(), ibu = bu.id();
  return x.tape()->record(
      std::move(out), {x, h, w, u, bw, bu},
      [ix, ih, iw, iu, ibw, ibu, r, z, n, ghn, hid](Tape& t, int self) {
        const auto g = t.grad(self).array();
        const auto hv = t.value(ih).array();
        const Mat dn_pre = (g * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
        const Mat dz_pre =
            (g * (hv - n.array()) * z.array() * (1.0 - z.array())).matrix();
        const Mat dr_pre =
            (dn_pre.array() * ghn.array() * r.array() * (1.0 - r.array())).matrix();
        Mat dgx(1, 3 * hid), dgh(1, 3 * hid);
        dgx << dr_pre, dz_pre, dn_pre;
        dgh << dr_pre, dz_pre, (dn_pre.array() * r.array()).matrix();
        if (t.requires_grad(ix)) t.accumulate(ix, dgx * t.value(iw).transpose());
        if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * dgx);
        if (t.requires_grad(ibw)) t.accumulate(ibw, dgx);
        if (t.requires_grad(ih)) {
          Mat dh = (g * z.array()).matrix() + dgh * t.value(iu).transpose();
          t.accumulate(ih, dh);
        }
        if (t.requires_grad(iu)) t.accumulate(iu, t.value(ih).transpose() * dgh);
        if (t.requires_grad(ibu)) t.accumulate(ibu, dgh);
      });
}

}  // namespace styleweaver::ag
