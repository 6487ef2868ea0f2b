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

#include "styleweaver/nn.hpp"

#include <cmath>

#include "styleweaver/error.hpp"

namespace styleweaver::nn {

void round_to_float(Mat& m) {
  double* p = m.data();
  for (ag::Index i = 0; i < m.size(); ++i) p[i] = static_cast<double>(static_cast<float>(p[i]));
}

Parameter& ParameterStore::create(const std::string& name, ag::Index rows, ag::Index cols,
                                  Init init, Rng& rng, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->trainable = trainable;
  p->value.resize(rows, cols);
  switch (init) {
    case Init::kZeros:
      p->value.setZero();
      break;
    case Init::kOnes:
      p->value.setOnes();
      break;
    case Init::kXavier: {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (ag::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-a, a);
      break;
    }
    case Init::kKaiming: {
      const double sd = std::sqrt(2.0 / static_cast<double>(rows));
      for (ag::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.normal(0.0, sd);
      break;
    }
  }
  round_to_float(p->value);
  p->zero_grad();
  Parameter& ref = *p;
  index_.emplace(name, p.get());
  params_.push_back(std::move(p));
  return ref;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter: " + name);
  return *it->second;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    if (p->trainable) p->zero_grad();
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->trainable) n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
               Init init)
    : weight(&store.create(name + ".weight", in, out, init, rng)),
      bias(&store.create(name + ".bias", 1, out, Init::kZeros, rng)) {}

Var Linear::operator()(Tape& t, const Var& x, bool frozen) const {
  return ag::add_row(ag::matmul(x, t.param(*weight, frozen)), t.param(*bias, frozen));
}

Embedding::Embedding(ParameterStore& store, const std::string& name, int count, int dim,
                     Rng& rng) {
  table = &store.create(name + ".table", count, dim, Init::kZeros, rng);
  for (ag::Index i = 0; i < table->value.size(); ++i) table->value.data()[i] = rng.normal(0.0, 0.3);
  round_to_float(table->value);
}

Var Embedding::operator()(Tape& t, std::span<const int> ids, bool frozen) const {
  for (int id : ids) {
    if (id < 0 || id >= count()) {
      throw ValidationError(table->name + ": id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(count()) + ")");
    }
  }
  return ag::gather_rows(t.param(*table, frozen), ids);
}

Var Embedding::row(Tape& t, int id, bool frozen) const {
  const int ids[1] = {id};
  return (*this)(t, ids, frozen);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, int in, int out, int k,
               Rng& rng)
    : weight(&store.create(name + ".weight", static_cast<ag::Index>(k) * in, out, Init::kKaiming,
                           rng)),
      bias(&store.create(name + ".bias", 1, out, Init::kZeros, rng)),
      kernel(k) {}

Var Conv1d::operator()(Tape& t, const Var& x, bool frozen) const {
  return ag::add_row(ag::conv1d(x, t.param(*weight, frozen), kernel), t.param(*bias, frozen));
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in, int out, int k, int s,
               Rng& rng)
    : weight(&store.create(name + ".weight", static_cast<ag::Index>(k) * k * in, out,
                           Init::kKaiming, rng)),
      kernel(k),
      stride(s),
      in_channels(in),
      out_channels(out) {}

Var Conv2d::operator()(Tape& t, const Var& x, ag::Index& height, ag::Index& width,
                       bool frozen) const {
  ag::Conv2dGeometry geom;
  geom.height = height;
  geom.width = width;
  geom.kernel = kernel;
  geom.stride = stride;
  geom.pad = kernel / 2;
  Var out = ag::conv2d(x, t.param(*weight, frozen), geom);
  height = geom.out_height();
  width = geom.out_width();
  return out;
}

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, int channels, Rng& rng)
    : gamma(&store.create(name + ".gamma", 1, channels, Init::kOnes, rng)),
      beta(&store.create(name + ".beta", 1, channels, Init::kZeros, rng)),
      running_mean(&store.create(name + ".running_mean", 1, channels, Init::kZeros, rng, false)),
      running_var(&store.create(name + ".running_var", 1, channels, Init::kOnes, rng, false)) {}

Var BatchNorm::operator()(Tape& t, const Var& x, NormMode mode, bool frozen) const {
  if (mode == NormMode::kTrain) {
    Mat mu, var;
    Var y = ag::batch_norm(x, t.param(*gamma, frozen), t.param(*beta, frozen), eps, &mu, &var);
    if (!frozen) {
      const double n = static_cast<double>(x.rows());
      const Mat unbiased = n > 1 ? Mat(var * (n / (n - 1.0))) : var;
      running_mean->value = (1.0 - momentum) * running_mean->value + momentum * mu;
      running_var->value = (1.0 - momentum) * running_var->value + momentum * unbiased;
      round_to_float(running_mean->value);
      round_to_float(running_var->value);
    }
    return y;
  }
  Mat inv_std = (running_var->value.array() + eps).rsqrt().matrix();
  Mat shift = -running_mean->value.cwiseProduct(inv_std);
  Var normed = ag::add_row(ag::mul_row(x, t.constant(inv_std)), t.constant(shift));
  return ag::add_row(ag::mul_row(normed, t.param(*gamma, frozen)), t.param(*beta, frozen));
}

Gru::Gru(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng)
    : w(&store.create(name + ".w", in, 3 * hidden, Init::kXavier, rng)),
      u(&store.create(name + ".u", hidden, 3 * hidden, Init::kXavier, rng)),
      bw(&store.create(name + ".bw", 1, 3 * hidden, Init::kZeros, rng)),
      bu(&store.create(name + ".bu", 1, 3 * hidden, Init::kZeros, rng)) {}

Var Gru::step(Tape& t, const Var& x, const Var& h, bool frozen) const {
  return ag::gru_cell(x, h, t.param(*w, frozen), t.param(*u, frozen), t.param(*bw, frozen),
                      t.param(*bu, frozen));
}

Var Gru::run(Tape& t, const Var& xs, bool frozen) const {
  Var h = t.constant(Mat::Zero(1, hidden()));
  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(xs.rows()));
  for (ag::Index i = 0; i < xs.rows(); ++i) {
    h = step(t, ag::slice_rows(xs, i, 1), h, frozen);
    states.push_back(h);
  }
  return ag::concat_rows(states);
}

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(&store), config_(config) {
  Rng unused(0);
  params_ = store.trainable();
  for (Parameter* p : params_) {
    const std::string mname = "adam.m/" + p->name;
    const std::string vname = "adam.v/" + p->name;
    m_.push_back(store.contains(mname)
                     ? &store.get(mname)
                     : &store.create(mname, p->value.rows(), p->value.cols(), Init::kZeros,
                                     unused, false));
    v_.push_back(store.contains(vname)
                     ? &store.get(vname)
                     : &store.create(vname, p->value.rows(), p->value.cols(), Init::kZeros,
                                     unused, false));
  }
  counter_ = store.contains("adam.step") ? &store.get("adam.step")
                                         : &store.create("adam.step", 1, 1, Init::kZeros, unused,
                                                         false);
}

std::int64_t Adam::steps_taken() const { return static_cast<std::int64_t>(counter_->value(0, 0)); }

double Adam::step() {
  double sq = 0.0;
  for (Parameter* p : params_) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  const double clip =
      (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;
  const double step = counter_->value(0, 0) + 1.0;
  counter_->value(0, 0) = step;
  const double bc1 = 1.0 - std::pow(config_.beta1, step);
  const double bc2 = 1.0 - std::pow(config_.beta2, step);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Mat& m = m_[i]->value;
    Mat& v = v_[i]->value;
    const Mat g = p.grad * clip;
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    round_to_float(m);
    round_to_float(v);
    p.value.array() -= config_.learning_rate * (m.array() / bc1) /
                       ((v.array() / bc2).sqrt() + config_.eps);
    round_to_float(p.value);
  }
  return norm;
}

}  // namespace styleweaver::nn
