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

#include <cstdint>
#include <memory>

#include "styleweaver/acoustic_model.hpp"
#include "styleweaver/corpus.hpp"
#include "styleweaver/prosody_predictor.hpp"
#include "styleweaver/style_extractor.hpp"

namespace styleweaver {

struct ModelConfig {
  RefEncoderConfig reference;
  PredictorConfig predictor;
  AcousticConfig acoustic;
  int n_styles = 3;

  /// Fills vocabulary sizes (phonemes, speakers, styles, mel channels) from
  /// a corpus and keeps the embedding dimension consistent across modules.
  void bind_to_corpus(const CorpusGenConfig& corpus);
  void validate() const;
};

/// All trainable components sharing one parameter store.
class StyleWeaverModel {
 public:
  StyleWeaverModel(const ModelConfig& config, std::uint64_t seed);
  StyleWeaverModel(const StyleWeaverModel&) = delete;
  StyleWeaverModel& operator=(const StyleWeaverModel&) = delete;

  const ModelConfig& config() const { return config_; }

  nn::ParameterStore store;
  ReferenceEncoder extractor;
  ClassifierHead speaker_head;
  ClassifierHead style_head;
  ProsodyPredictor predictor;
  AcousticModel acoustic;

 private:
  ModelConfig config_;
};

}  // namespace styleweaver
