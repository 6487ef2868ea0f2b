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

#include "styleweaver/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "styleweaver/error.hpp"

namespace styleweaver {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  if (x.size() < 2) throw ValidationError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

PhonePrediction predict_utterance_prosody(const StyleWeaverModel& model,
                                          const UtteranceRecord& utt, const ProsodyStats& stats) {
  Tape t;
  Var z = t.constant(model.extractor.posterior_mean(utt.mel_matrix()));
  PredictorOutput pred = model.predictor.forward(t, utt.phonemes, utt.speaker_id, z, utt.durations);
  const Mat fp = pred.final_phone.value();
  const Mat logd = pred.phone.value().col(kLogDurationCol);
  PhonePrediction out;
  out.pitch.resize(static_cast<std::size_t>(fp.rows()));
  for (ag::Index i = 0; i < fp.rows(); ++i) {
    out.pitch[static_cast<std::size_t>(i)] = fp(i, 0);
    out.energy.push_back(fp(i, 1));
  }
  for (int d : realize_durations(std::span<const double>(logd.data(), logd.size()),
                                 utt.speaker_id, stats)) {
    out.duration.push_back(d);
  }
  return out;
}

UtteranceProsodyScore score_utterance(const PhonePrediction& pred, const UtteranceRecord& utt,
                                      const ProsodyStats& stats) {
  const ProsodyTargets targets = make_prosody_targets(utt, stats);
  const auto n = static_cast<std::size_t>(targets.phone.rows());
  std::vector<double> gp(n), ge(n), gd(n);
  for (std::size_t i = 0; i < n; ++i) {
    gp[i] = targets.phone(static_cast<ag::Index>(i), kPitchCol);
    ge[i] = targets.phone(static_cast<ag::Index>(i), kEnergyCol);
    gd[i] = utt.durations[i];
  }
  return {utt.utt_id, pearson(pred.pitch, gp), pearson(pred.energy, ge),
          pearson(pred.duration, gd)};
}

ProsodyReport prosody_report(const StyleWeaverModel& model,
                             std::span<const UtteranceRecord* const> utterances,
                             const ProsodyStats& stats) {
  if (utterances.empty()) throw ValidationError("prosody_report: empty split");
  ProsodyReport r;
  for (const UtteranceRecord* u : utterances) {
    UtteranceProsodyScore s = score_utterance(predict_utterance_prosody(model, *u, stats), *u, stats);
    r.f0 += s.f0;
    r.energy += s.energy;
    r.duration += s.duration;
    r.per_utterance.push_back(std::move(s));
  }
  const double n = static_cast<double>(utterances.size());
  r.f0 /= n;
  r.energy /= n;
  r.duration /= n;
  return r;
}

nlohmann::json to_json(const ProsodyReport& r, bool per_utterance) {
  nlohmann::json j{{"f0", r.f0}, {"energy", r.energy}, {"duration", r.duration},
                   {"utterances", r.per_utterance.size()}};
  if (per_utterance) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : r.per_utterance) {
      rows.push_back({{"utt_id", s.utt_id}, {"f0", s.f0}, {"energy", s.energy},
                      {"duration", s.duration}});
    }
    j["per_utterance"] = rows;
  }
  return j;
}

const StyleStrength& StrengthReport::at(const std::string& style) const {
  for (const StyleStrength& s : styles) {
    if (s.style == style) return s;
  }
  throw LookupError("strength report has no style '" + style + "'");
}

int style_owner(const CorpusGenConfig& config, const std::string& style) {
  config.style_index(style);
  for (const SpeakerProfile& s : config.speakers) {
    if (!s.labeled) continue;
    for (const std::string& name : s.style_set) {
      if (name == style) return s.speaker_id;
    }
  }
  throw LookupError("no labeled speaker owns style '" + style + "'");
}

int default_target(const CorpusGenConfig& config, int source) {
  for (const SpeakerProfile& s : config.speakers) {
    if (!s.labeled && s.speaker_id != source) return s.speaker_id;
  }
  for (const SpeakerProfile& s : config.speakers) {
    if (s.speaker_id != source) return s.speaker_id;
  }
  return source;
}

namespace {

int sign(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

// Strictly monotone in `direction` (+1 increasing, -1 decreasing).
bool monotone(const std::vector<double>& v, int direction) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (direction * (v[i] - v[i - 1]) <= 0.0) return false;
  }
  return true;
}

}  // namespace

StrengthReport strength_report(const StyleWeaverModel& model, const CentroidMap& centroids,
                               const ProsodyStats& stats, const CorpusGenConfig& corpus_config,
                               std::span<const std::vector<int>> sentences,
                               std::span<const double> scales) {
  if (scales.size() < 2) throw ValidationError("strength_report: need at least two scales");
  for (std::size_t i = 1; i < scales.size(); ++i) {
    if (!(scales[i] > scales[i - 1])) throw ValidationError("strength_report: scales must increase");
  }
  StrengthReport report;
  report.scales.assign(scales.begin(), scales.end());
  for (const StyleSpec& spec : corpus_config.styles) {
    const int pdir = sign(spec.pitch_shift);
    const int ddir = sign(spec.dur_factor);
    if (pdir == 0 && ddir == 0) continue;
    if (!centroids.count(spec.name)) throw LookupError("no centroid for style '" + spec.name + "'");
    StyleStrength s;
    s.style = spec.name;
    s.source_speaker = style_owner(corpus_config, spec.name);
    s.target_speaker = default_target(corpus_config, s.source_speaker);
    s.pitch_checked = pdir != 0;
    s.duration_checked = ddir != 0;
    for (const std::vector<int>& phonemes : sentences) {
      std::vector<double> pitch, duration;
      for (double scale : scales) {
        TransferRequest req;
        req.phonemes = phonemes;
        req.source_speaker = s.source_speaker;
        req.target_speaker = s.target_speaker;
        req.style = spec.name;
        req.scale = scale;
        req.decode = false;
        const TransferResult r = transfer(req, model, centroids, stats);
        double mp = 0.0;
        for (double p : r.pitch) mp += p;
        pitch.push_back(mp / static_cast<double>(r.pitch.size()));
        double total = 0.0;
        for (int d : r.durations) total += d;
        duration.push_back(total);
      }
      const bool ok = (pdir == 0 || monotone(pitch, pdir)) && (ddir == 0 || monotone(duration, ddir));
      s.correct += ok ? 1 : 0;
      ++s.sentences;
    }
    s.accuracy = s.sentences > 0 ? static_cast<double>(s.correct) / s.sentences : 0.0;
    report.styles.push_back(s);
  }
  return report;
}

nlohmann::json to_json(const StrengthReport& r) {
  nlohmann::json styles = nlohmann::json::array();
  for (const StyleStrength& s : r.styles) {
    styles.push_back({{"style", s.style},
                      {"source_speaker", s.source_speaker},
                      {"target_speaker", s.target_speaker},
                      {"pitch_checked", s.pitch_checked},
                      {"duration_checked", s.duration_checked},
                      {"sentences", s.sentences},
                      {"correct", s.correct},
                      {"accuracy", s.accuracy}});
  }
  return {{"scales", r.scales}, {"styles", styles}};
}

double linear_probe(const Mat& features, std::span<const int> labels, int classes,
                    std::span<const bool> in_train, const ProbeConfig& config) {
  const ag::Index n = features.rows(), d = features.cols();
  if (static_cast<std::size_t>(n) != labels.size() || labels.size() != in_train.size()) {
    throw ShapeError("linear_probe: row count mismatch");
  }
  std::vector<ag::Index> train, test;
  for (ag::Index i = 0; i < n; ++i) (in_train[static_cast<std::size_t>(i)] ? train : test).push_back(i);
  if (train.empty() || test.empty()) throw ValidationError("linear_probe: empty probe split");
  std::vector<int> present(static_cast<std::size_t>(classes), 0);
  for (ag::Index i : train) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw ValidationError("linear_probe: label out of range");
    present[static_cast<std::size_t>(y)] = 1;
  }
  for (ag::Index i : test) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw ValidationError("linear_probe: label out of range");
    if (!present[static_cast<std::size_t>(y)]) {
      throw ValidationError("linear_probe: class " + std::to_string(y) +
                            " absent from the probe-train split");
    }
  }

  Mat x(static_cast<ag::Index>(train.size()), d);
  for (std::size_t r = 0; r < train.size(); ++r) x.row(static_cast<ag::Index>(r)) = features.row(train[r]);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (ag::Index j = 0; j < d; ++j) sd(j) = sd(j) > 1e-8 ? sd(j) : 1.0;
  auto normalize = [&](const Mat& m) -> Mat {
    return ((m.rowwise() - mean).array().rowwise() / sd.array()).matrix();
  };
  x = normalize(x);
  Mat y = Mat::Zero(x.rows(), classes);
  for (std::size_t r = 0; r < train.size(); ++r) {
    y(static_cast<ag::Index>(r), labels[static_cast<std::size_t>(train[r])]) = 1.0;
  }

  Mat w = Mat::Zero(d, classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (int e = 0; e < config.epochs; ++e) {
    Mat logits = (x * w).rowwise() + b;
    for (ag::Index r = 0; r < logits.rows(); ++r) {
      const double m = logits.row(r).maxCoeff();
      logits.row(r) = (logits.row(r).array() - m).exp().matrix();
      logits.row(r) /= logits.row(r).sum();
    }
    const Mat g = (logits - y) * inv_n;
    w -= config.learning_rate * (x.transpose() * g + config.l2 * w);
    b -= config.learning_rate * g.colwise().sum();
  }

  int correct = 0;
  for (ag::Index i : test) {
    const Mat xi = normalize(features.row(i));
    Eigen::RowVectorXd logits = xi * w + b;
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    correct += static_cast<int>(arg) == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

ProbeResult probe_classifiers(const Mat& embeddings, std::span<const int> speakers,
                              std::span<const std::optional<int>> styles, int n_speakers,
                              int n_styles, std::span<const bool> in_train,
                              const ProbeConfig& config) {
  ProbeResult r;
  r.speaker_accuracy = linear_probe(embeddings, speakers, n_speakers, in_train, config);
  for (bool b : in_train) (b ? r.speaker_train : r.speaker_test)++;
  std::vector<ag::Index> rows;
  std::vector<int> labels;
  std::vector<bool> mask;
  for (std::size_t i = 0; i < styles.size(); ++i) {
    if (!styles[i]) continue;
    rows.push_back(static_cast<ag::Index>(i));
    labels.push_back(*styles[i]);
    mask.push_back(in_train[i]);
  }
  Mat sub(static_cast<ag::Index>(rows.size()), embeddings.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) sub.row(static_cast<ag::Index>(k)) = embeddings.row(rows[k]);
  std::unique_ptr<bool[]> flags(new bool[mask.size()]);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    flags[k] = mask[k];
    (mask[k] ? r.style_train : r.style_test)++;
  }
  r.style_accuracy = linear_probe(sub, labels, n_styles,
                                  std::span<const bool>(flags.get(), mask.size()), config);
  r.speaker_chance = 1.0 / n_speakers;
  r.style_chance = 1.0 / n_styles;
  return r;
}

ProbeResult probe_model(const StyleWeaverModel& model, const Corpus& corpus,
                        const ProbeConfig& config) {
  std::vector<const UtteranceRecord*> held;
  for (const UtteranceRecord& u : corpus.utterances) {
    if (split_of(u.utt_id) != Split::kTrain) held.push_back(&u);
  }
  if (held.empty()) throw ValidationError("probe: no held-out utterances");
  Mat emb(static_cast<ag::Index>(held.size()), model.extractor.embedding_dim());
  std::vector<int> speakers;
  std::vector<std::optional<int>> styles;
  std::unique_ptr<bool[]> in_train(new bool[held.size()]);
  for (std::size_t i = 0; i < held.size(); ++i) {
    emb.row(static_cast<ag::Index>(i)) = model.extractor.posterior_mean(held[i]->mel_matrix());
    speakers.push_back(held[i]->speaker_id);
    styles.push_back(held[i]->style_label);
    // Val and test each split in half by a second hash.
    in_train[i] = (fnv1a(held[i]->utt_id + "#probe") & 1u) == 0;
  }
  return probe_classifiers(emb, speakers, styles, corpus.n_speakers(), corpus.n_styles(),
                           std::span<const bool>(in_train.get(), held.size()), config);
}

nlohmann::json to_json(const ProbeResult& r) {
  return {{"note", "linear probes on posterior means; automated stand-in for listening tests"},
          {"speaker_accuracy", r.speaker_accuracy},
          {"speaker_chance", r.speaker_chance},
          {"speaker_train", r.speaker_train},
          {"speaker_test", r.speaker_test},
          {"style_accuracy", r.style_accuracy},
          {"style_chance", r.style_chance},
          {"style_train", r.style_train},
          {"style_test", r.style_test}};
}

std::vector<TrajectoryRow> strength_trajectories(const StyleWeaverModel& model,
                                                 const CentroidMap& centroids,
                                                 const ProsodyStats& stats,
                                                 const CorpusGenConfig& corpus_config,
                                                 std::span<const int> phonemes,
                                                 const std::string& style,
                                                 std::span<const double> scales) {
  std::vector<TrajectoryRow> rows;
  const int source = style_owner(corpus_config, style);
  for (double scale : scales) {
    TransferRequest req;
    req.phonemes.assign(phonemes.begin(), phonemes.end());
    req.source_speaker = source;
    req.target_speaker = default_target(corpus_config, source);
    req.style = style;
    req.scale = scale;
    req.decode = false;
    const TransferResult r = transfer(req, model, centroids, stats);
    for (std::size_t i = 0; i < r.pitch.size(); ++i) {
      rows.push_back({static_cast<int>(i), scale, r.pitch[i], r.energy[i], r.durations[i]});
    }
  }
  return rows;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "phone_index,scale,pitch,energy,duration\n";
  char buf[160];
  for (const TrajectoryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%d\n", r.phone_index, r.scale, r.pitch,
                  r.energy, r.duration);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "phone_index,scale,pitch,energy,duration") {
    throw FormatError(path.string() + ": unexpected trajectory header");
  }
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrajectoryRow r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%d", &r.phone_index, &r.scale, &r.pitch,
                    &r.energy, &r.duration) != 5) {
      throw FormatError(path.string() + ": bad row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace styleweaver
