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

#include "styleweaver/model.hpp"

#include "styleweaver/error.hpp"

namespace styleweaver {

void ModelConfig::bind_to_corpus(const CorpusGenConfig& corpus) {
  predictor.n_phonemes = corpus.phoneme_inventory;
  predictor.n_speakers = static_cast<int>(corpus.speakers.size());
  acoustic.n_phonemes = corpus.phoneme_inventory;
  acoustic.n_speakers = predictor.n_speakers;
  acoustic.n_mels = corpus.n_mels;
  n_styles = static_cast<int>(corpus.styles.size());
  predictor.style_dim = reference.embedding_dim;
  acoustic.style_dim = reference.embedding_dim;
}

void ModelConfig::validate() const {
  reference.validate();
  predictor.validate();
  acoustic.validate();
  if (n_styles < 1) throw ConfigError("model: n_styles must be >= 1");
  if (predictor.style_dim != reference.embedding_dim ||
      acoustic.style_dim != reference.embedding_dim) {
    throw ConfigError("model: style dimension differs between modules");
  }
  if (predictor.n_speakers != acoustic.n_speakers ||
      predictor.n_phonemes != acoustic.n_phonemes) {
    throw ConfigError("model: vocabulary sizes differ between modules");
  }
}

namespace {

// Module construction order fixes the parameter draw order, so each module
// gets its own stream.
Rng module_rng(std::uint64_t seed, std::uint64_t tag) { return Rng(mix_seed(seed, tag)); }

}  // namespace

StyleWeaverModel::StyleWeaverModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng r1 = module_rng(seed, 1);
  extractor = ReferenceEncoder(store, config_.reference, config_.acoustic.n_mels, r1);
  Rng r2 = module_rng(seed, 2);
  speaker_head = ClassifierHead(store, "adv.speaker", config_.reference.embedding_dim,
                                config_.predictor.n_speakers, r2);
  Rng r3 = module_rng(seed, 3);
  style_head =
      ClassifierHead(store, "style.head", config_.reference.embedding_dim, config_.n_styles, r3);
  Rng r4 = module_rng(seed, 4);
  predictor = ProsodyPredictor(store, config_.predictor, r4);
  Rng r5 = module_rng(seed, 5);
  acoustic = AcousticModel(store, config_.acoustic, r5);
}

}  // namespace styleweaver
