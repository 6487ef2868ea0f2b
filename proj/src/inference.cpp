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

#include "styleweaver/inference.hpp"

#include <algorithm>
#include <cmath>

#include "styleweaver/error.hpp"

namespace styleweaver {

CentroidMap compute_centroids(const StyleWeaverModel& model,
                              std::span<const UtteranceRecord* const> utterances,
                              const CorpusGenConfig& corpus_config) {
  const int dim = model.extractor.embedding_dim();
  std::vector<Mat> sums(corpus_config.styles.size(), Mat::Zero(1, dim));
  std::vector<int> counts(corpus_config.styles.size(), 0);
  // fixed summation order, so any permutation of the input gives the same bits
  std::vector<const UtteranceRecord*> sorted(utterances.begin(), utterances.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const UtteranceRecord* a, const UtteranceRecord* b) { return a->utt_id < b->utt_id; });
  for (const UtteranceRecord* u : sorted) {
    if (!u->style_label) continue;
    const auto k = static_cast<std::size_t>(*u->style_label);
    if (k >= sums.size()) throw ValidationError("style label out of range in " + u->utt_id);
    sums[k] += model.extractor.posterior_mean(u->mel_matrix());
    ++counts[k];
  }
  CentroidMap out;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    const std::string& name = corpus_config.styles[k].name;
    if (counts[k] == 0) throw MissingDataError("no labeled utterances for style " + name);
    Mat e = sums[k] / static_cast<double>(counts[k]);
    if (!e.allFinite()) throw NumericalError("non-finite centroid for style " + name);
    out[name] = StyleCentroid{name, e, counts[k]};
  }
  return out;
}

CentroidMap compute_centroids(const StyleWeaverModel& model, const Corpus& corpus) {
  std::vector<const UtteranceRecord*> all;
  for (const UtteranceRecord& u : corpus.utterances) all.push_back(&u);
  return compute_centroids(model, all, corpus.config);
}

nlohmann::json centroids_to_json(const CentroidMap& centroids) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, c] : centroids) {
    std::vector<double> v(c.embedding.data(), c.embedding.data() + c.embedding.size());
    out[name] = {{"count", c.count}, {"embedding", v}};
  }
  return out;
}

CentroidMap centroids_from_json(const nlohmann::json& j) {
  CentroidMap out;
  try {
    for (const auto& [name, c] : j.items()) {
      const auto v = c.at("embedding").get<std::vector<double>>();
      Mat e(1, static_cast<ag::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) e(0, static_cast<ag::Index>(i)) = v[i];
      out[name] = StyleCentroid{name, e, c.value("count", 0)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("centroids: ") + e.what());
  }
  return out;
}

Mat scale_style(const Mat& embedding, double s) {
  if (!(s > 0.0)) throw ValidationError("style scale must be > 0");
  return s * embedding;
}

TransferResult transfer(const TransferRequest& req, const StyleWeaverModel& model,
                        const CentroidMap& centroids, const ProsodyStats& stats) {
  const int n_speakers = model.config().predictor.n_speakers;
  for (int spk : {req.source_speaker, req.target_speaker}) {
    if (spk < 0 || spk >= n_speakers) throw LookupError("unknown speaker " + std::to_string(spk));
  }
  auto it = centroids.find(req.style);
  if (it == centroids.end()) throw LookupError("no centroid for style '" + req.style + "'");
  if (!(req.scale > 0.0) || req.scale > kMaxStyleScale) {
    throw ValidationError("style scale must be in (0, 4]");
  }
  if (req.phonemes.empty()) throw ValidationError("transfer: empty phoneme sequence");
  for (int p : req.phonemes) {
    if (p < 0 || p >= model.config().predictor.n_phonemes) {
      throw LookupError("unknown phoneme " + std::to_string(p));
    }
  }

  Tape t;
  Var z = t.constant(scale_style(it->second.embedding, req.scale));
  // The phone-level pass fixes the durations; the full pass then expands
  // with them.
  Var embs = model.predictor.phone_embeddings(t, req.phonemes);
  Var phone = model.predictor.predict_phone(
      t, embs, model.predictor.speaker_embedding(t, req.source_speaker), z);
  const Mat logd = phone.value().col(kLogDurationCol);
  TransferResult out;
  out.durations = realize_durations(std::span<const double>(logd.data(), logd.size()),
                                    req.source_speaker, stats);
  PredictorOutput pred =
      model.predictor.forward(t, req.phonemes, req.source_speaker, z, out.durations);
  out.phone_prosody = pred.final_phone.value();
  if (pred.frame.valid()) out.frame_prosody = pred.frame.value();
  const Mat pitch = out.phone_prosody.col(0);
  const Mat energy = out.phone_prosody.col(1);
  out.pitch = destandardize(std::span<const double>(pitch.data(), pitch.size()),
                            req.source_speaker, stats, FeatureKind::kPitch);
  out.energy = destandardize(std::span<const double>(energy.data(), energy.size()),
                             req.source_speaker, stats, FeatureKind::kEnergy);
  for (double v : out.pitch) {
    if (!std::isfinite(v)) throw NumericalError("transfer: non-finite predicted pitch");
  }
  if (!req.decode) return out;

  Var memory = model.acoustic.encode_text(t, req.phonemes,
                                          model.acoustic.speaker_embedding(t, req.target_speaker),
                                          z, t.constant(out.phone_prosody));
  DecodeOptions opts;
  opts.dropout = req.dropout;
  opts.dropout_seed = req.dropout_seed;
  const int cap = req.max_frames > 0 ? req.max_frames
                                     : model.config().acoustic.decoder.max_decode_frames;
  DecodeResult dec = model.acoustic.decode_free(t, memory, cap, opts);
  out.mel = dec.mel.value();
  out.truncated = dec.truncated;
  if (!out.mel.allFinite()) throw NumericalError("transfer: non-finite mel output");
  return out;
}

}  // namespace styleweaver
