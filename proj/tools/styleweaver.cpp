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

// styleweaver command-line front end.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleweaver/config_json.hpp"
#include "styleweaver/corpus.hpp"
#include "styleweaver/error.hpp"
#include "styleweaver/evaluation.hpp"
#include "styleweaver/inference.hpp"
#include "styleweaver/training.hpp"

namespace sw = styleweaver;
using nlohmann::json;

namespace {

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw sw::ConfigError("bad scale '" + item + "'");
    }
  }
  if (out.empty()) throw sw::ConfigError("no scales given");
  return out;
}

std::vector<int> read_phonemes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sw::IoError("cannot open phoneme file " + path);
  std::vector<int> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw sw::FormatError(path + ": bad phoneme id '" + tok + "'");
    }
  }
  if (out.empty()) throw sw::FormatError(path + ": no phonemes");
  return out;
}

sw::CentroidMap centroids_of(const sw::LoadedModel& m) {
  if (!m.metadata.contains("centroids")) {
    throw sw::MissingDataError("checkpoint has no style centroids (use a final checkpoint)");
  }
  return sw::centroids_from_json(m.metadata.at("centroids"));
}

std::vector<std::vector<int>> evaluation_sentences(const sw::LoadedModel& m) {
  if (!m.metadata.contains("evaluation_sentences")) {
    throw sw::MissingDataError("checkpoint has no held-out sentences (use a final checkpoint)");
  }
  return m.metadata.at("evaluation_sentences").get<std::vector<std::vector<int>>>();
}

void check_corpus_matches(const sw::LoadedModel& m, const sw::Corpus& corpus) {
  const bool same_seed = m.metadata.value("corpus_seed", corpus.seed) == corpus.seed;
  if (!(m.corpus_config == corpus.config) || !same_seed) {
    throw sw::ValidationError("corpus differs from the one the checkpoint was trained on");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"styleweaver: cross-speaker style transfer toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, corpus_dir, ckpt, style, phonemes_path, split = "test";
  std::string scales_text = "0.5,1,2";
  std::uint64_t seed = 1;
  int source = 0, target = 0;
  double scale = 1.0;
  bool single_level = false, no_adv = false, no_cycle = false, no_slm = false, fresh = false;
  bool deterministic = false;
  int sentence_index = 0;

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  gen->add_option("--config", config_path, "corpus generator JSON (defaults if omitted)");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", seed, "generator seed");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "training JSON (TrainConfig field names)");
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--out", out_path, "run directory")->required();
  train->add_flag("--single-level", single_level, "drop the frame-level prosody predictor");
  train->add_flag("--no-adv", no_adv, "speaker adversary without gradient reversal (lambda 0)");
  train->add_flag("--no-cycle", no_cycle, "disable the cycle consistency losses");
  train->add_flag("--no-slm", no_slm, "classify unlabeled utterances as neutral");
  train->add_flag("--fresh", fresh, "ignore an existing latest.swck");

  auto* synth = app.add_subcommand("synthesize", "cross-speaker style transfer");
  synth->add_option("--ckpt", ckpt)->required();
  synth->add_option("--source-speaker", source)->required();
  synth->add_option("--target-speaker", target)->required();
  synth->add_option("--style", style)->required();
  synth->add_option("--scale", scale);
  synth->add_option("--phonemes", phonemes_path, "whitespace separated phoneme ids")->required();
  synth->add_option("--out", out_path, "feature file (SWF1)")->required();
  synth->add_flag("--deterministic", deterministic, "disable pre-net dropout");
  synth->add_option("--seed", seed, "pre-net dropout seed");

  auto* eprosody = app.add_subcommand("eval-prosody", "phone-level prosody correlation");
  eprosody->add_option("--ckpt", ckpt)->required();
  eprosody->add_option("--corpus", corpus_dir)->required();
  eprosody->add_option("--split", split);

  auto* estrength = app.add_subcommand("eval-strength", "strength ordering accuracy");
  estrength->add_option("--ckpt", ckpt)->required();
  estrength->add_option("--scales", scales_text);

  auto* eprobes = app.add_subcommand("eval-probes", "linear probes on style embeddings");
  eprobes->add_option("--ckpt", ckpt)->required();
  eprobes->add_option("--corpus", corpus_dir)->required();

  auto* plot = app.add_subcommand("plot-strength", "per-phone prosody trajectories as CSV");
  plot->add_option("--ckpt", ckpt)->required();
  plot->add_option("--style", style)->required();
  plot->add_option("--out", out_path)->required();
  plot->add_option("--scales", scales_text);
  plot->add_option("--sentence", sentence_index, "index into the held-out sentences");
  plot->add_option("--phonemes", phonemes_path, "explicit phoneme file instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    sw::CorpusGenConfig cfg = config_path.empty()
                                  ? sw::CorpusGenConfig::defaults()
                                  : sw::corpus_config_from_json(sw::load_json_file(config_path));
    cfg.validate();
    const sw::Corpus corpus = sw::generate_corpus(cfg, seed);
    sw::write_corpus(corpus, out_path);
    std::cout << json{{"utterances", corpus.utterances.size()}, {"out", out_path}}.dump() << '\n';
    return 0;
  }
  if (train->parsed()) {
    sw::TrainConfig cfg = config_path.empty()
                              ? sw::TrainConfig{}
                              : sw::train_config_from_json(sw::load_json_file(config_path));
    if (single_level) cfg.model.predictor.hierarchical = false;
    if (no_adv) cfg.grl_lambda = 0.0;
    if (no_cycle) cfg.w_cyc1 = cfg.w_cyc2 = 0.0;
    if (no_slm) cfg.style_loss_mask = false;
    const sw::Corpus corpus = sw::read_corpus(corpus_dir);
    sw::RunOptions opts;
    opts.resume = !fresh;
    const sw::TrainResult r = sw::run_training(corpus, cfg, out_path, opts);
    std::cout << json{{"final_checkpoint", r.final_checkpoint.string()},
                      {"start_step", r.start_step},
                      {"steps_run", r.steps_run},
                      {"last_total", r.last.total}}
                     .dump()
              << '\n';
    return 0;
  }
  if (synth->parsed()) {
    const sw::LoadedModel m = sw::load_model(ckpt);
    sw::TransferRequest req;
    req.phonemes = read_phonemes(phonemes_path);
    req.source_speaker = source;
    req.target_speaker = target;
    req.style = style;
    req.scale = scale;
    req.dropout = !deterministic;
    req.dropout_seed = seed;
    const sw::TransferResult r = sw::transfer(req, *m.model, centroids_of(m), m.stats);
    // Frame prosody follows the realized durations; map it onto the
    // decoded length.
    const std::vector<double> f0 = sw::interpolate_frames(r.pitch, r.durations);
    const std::vector<double> en = sw::interpolate_frames(r.energy, r.durations);
    const auto frames = static_cast<std::size_t>(r.mel.rows());
    std::vector<float> f0f(frames), enf(frames), mel(static_cast<std::size_t>(r.mel.size()));
    for (std::size_t j = 0; j < frames; ++j) {
      const std::size_t k = std::min(f0.size() - 1, j * f0.size() / frames);
      f0f[j] = static_cast<float>(f0[k]);
      enf[j] = static_cast<float>(en[k]);
    }
    for (std::size_t k = 0; k < mel.size(); ++k) mel[k] = static_cast<float>(r.mel.data()[k]);
    sw::write_feature_file(out_path, f0f, enf, mel, static_cast<int>(r.mel.cols()));
    std::cout << json{{"frames", frames},
                      {"durations", r.durations},
                      {"truncated", r.truncated},
                      {"out", out_path}}
                     .dump()
              << '\n';
    return 0;
  }
  if (eprosody->parsed()) {
    const sw::LoadedModel m = sw::load_model(ckpt);
    const sw::Corpus corpus = sw::read_corpus(corpus_dir);
    check_corpus_matches(m, corpus);
    const auto utts = sw::select_split(corpus, sw::parse_split(split));
    json j = sw::to_json(sw::prosody_report(*m.model, utts, m.stats));
    j["split"] = split;
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (estrength->parsed()) {
    const sw::LoadedModel m = sw::load_model(ckpt);
    const auto scales = parse_scales(scales_text);
    const auto sentences = evaluation_sentences(m);
    json j = sw::to_json(sw::strength_report(*m.model, centroids_of(m), m.stats, m.corpus_config,
                                             sentences, scales));
    j["note"] = "automated ordering check on predicted prosody; stand-in for listening tests";
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (eprobes->parsed()) {
    const sw::LoadedModel m = sw::load_model(ckpt);
    const sw::Corpus corpus = sw::read_corpus(corpus_dir);
    check_corpus_matches(m, corpus);
    std::cout << sw::to_json(sw::probe_model(*m.model, corpus)).dump(2) << '\n';
    return 0;
  }
  if (plot->parsed()) {
    const sw::LoadedModel m = sw::load_model(ckpt);
    std::vector<int> phonemes;
    if (!phonemes_path.empty()) {
      phonemes = read_phonemes(phonemes_path);
    } else {
      const auto sentences = evaluation_sentences(m);
      if (sentence_index < 0 || sentence_index >= static_cast<int>(sentences.size())) {
        throw sw::LookupError("sentence index out of range");
      }
      phonemes = sentences[static_cast<std::size_t>(sentence_index)];
    }
    const auto rows = sw::strength_trajectories(*m.model, centroids_of(m), m.stats,
                                                m.corpus_config, phonemes, style,
                                                parse_scales(scales_text));
    sw::write_trajectory_csv(out_path, rows);
    std::cout << json{{"rows", rows.size()}, {"out", out_path}}.dump() << '\n';
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sw::Error& e) {
    std::cerr << "styleweaver: " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "styleweaver: malformed JSON: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "styleweaver: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "styleweaver: " << e.what() << '\n';
    return 3;
  }
}
