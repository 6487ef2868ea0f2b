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

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "styleweaver/config_json.hpp"
#include "styleweaver/corpus.hpp"
#include "styleweaver/error.hpp"

namespace styleweaver {

static_assert(std::endian::native == std::endian::little,
              "feature and checkpoint files are little-endian");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'S', 'W', 'F', '1'};

}  // namespace

void write_feature_file(const fs::path& path, std::span<const float> f0,
                        std::span<const float> energy, std::span<const float> mel, int n_mels) {
  if (energy.size() != f0.size() || mel.size() != f0.size() * static_cast<std::size_t>(n_mels)) {
    throw ShapeError(path.string() + ": feature lengths disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto T = static_cast<std::uint32_t>(f0.size());
  const auto M = static_cast<std::uint32_t>(n_mels);
  out.write(kFeatureMagic, 4);
  out.write(reinterpret_cast<const char*>(&T), 4);
  out.write(reinterpret_cast<const char*>(&M), 4);
  out.write(reinterpret_cast<const char*>(f0.data()), static_cast<std::streamsize>(f0.size_bytes()));
  out.write(reinterpret_cast<const char*>(energy.data()),
            static_cast<std::streamsize>(energy.size_bytes()));
  out.write(reinterpret_cast<const char*>(mel.data()), static_cast<std::streamsize>(mel.size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

FeatureFile read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t T = 0, M = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic (expected SWF1)");
  }
  in.read(reinterpret_cast<char*>(&T), 4);
  in.read(reinterpret_cast<char*>(&M), 4);
  if (!in) throw FormatError(path.string() + ": truncated header");
  FeatureFile f;
  f.n_frames = static_cast<int>(T);
  f.n_mels = static_cast<int>(M);
  f.f0.resize(T);
  f.energy.resize(T);
  f.mel.resize(static_cast<std::size_t>(T) * M);
  in.read(reinterpret_cast<char*>(f.f0.data()), static_cast<std::streamsize>(T * 4));
  in.read(reinterpret_cast<char*>(f.energy.data()), static_cast<std::streamsize>(T * 4));
  in.read(reinterpret_cast<char*>(f.mel.data()),
          static_cast<std::streamsize>(static_cast<std::size_t>(T) * M * 4));
  if (!in) throw FormatError(path.string() + ": truncated payload");
  in.peek();
  if (!in.eof()) throw FormatError(path.string() + ": trailing bytes after payload");
  return f;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  if (ec) throw IoError("cannot create " + (dir / "features").string() + ": " + ec.message());

  json meta;
  meta["seed"] = corpus.seed;
  meta["generator"] = corpus_config_to_json(corpus.config);
  meta["speakers"] = meta["generator"]["speakers"];
  meta["styles"] = meta["generator"]["styles"];
  meta["metadata"] = {{"sample_rate", corpus.metadata.sample_rate},
                      {"frame", corpus.metadata.frame_size},
                      {"hop", corpus.metadata.hop_size}};
  meta["phone_pitch_offset"] = corpus.phone_pitch_offset;
  meta["phone_energy_offset"] = corpus.phone_energy_offset;
  {
    std::ofstream out(dir / "corpus.json");
    if (!out) throw IoError("cannot write " + (dir / "corpus.json").string());
    out << meta.dump(2) << "\n";
  }

  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (const UtteranceRecord& u : corpus.utterances) {
    const std::string rel = "features/" + u.utt_id + ".swf";
    json row;
    row["utt_id"] = u.utt_id;
    row["speaker_id"] = u.speaker_id;
    row["style"] = u.style_label
                       ? json(corpus.config.styles[static_cast<std::size_t>(*u.style_label)].name)
                       : json(nullptr);
    row["strength"] = u.strength;
    row["phonemes"] = u.phonemes;
    row["durations"] = u.durations;
    row["n_frames"] = u.n_frames();
    row["feature_file"] = rel;
    manifest << row.dump() << "\n";
    write_feature_file(dir / rel, u.f0, u.energy, u.mel, u.n_mels);
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.jsonl").string());
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path meta_path = dir / "corpus.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError(meta_path.string() + ": missing corpus metadata");
  Corpus corpus;
  try {
    const json meta = json::parse(meta_in);
    json gen = meta.at("generator");
    gen["speakers"] = meta.at("speakers");
    gen["styles"] = meta.at("styles");
    corpus.config = corpus_config_from_json(gen);
    corpus.seed = meta.at("seed").get<std::uint64_t>();
    const json& md = meta.at("metadata");
    corpus.metadata = {md.at("sample_rate").get<int>(), md.at("frame").get<int>(),
                       md.at("hop").get<int>()};
    corpus.phone_pitch_offset = meta.at("phone_pitch_offset").get<std::vector<double>>();
    corpus.phone_energy_offset = meta.at("phone_energy_offset").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }

  const fs::path manifest_path = dir / "manifest.jsonl";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw FormatError(manifest_path.string() + ": missing manifest");
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    UtteranceRecord u;
    std::string feature_file;
    int n_frames = 0;
    try {
      const json row = json::parse(line);
      u.utt_id = row.at("utt_id").get<std::string>();
      u.speaker_id = row.at("speaker_id").get<int>();
      if (!row.at("style").is_null()) {
        u.style_label = corpus.config.style_index(row.at("style").get<std::string>());
      }
      u.strength = row.at("strength").get<double>();
      u.phonemes = row.at("phonemes").get<std::vector<int>>();
      u.durations = row.at("durations").get<std::vector<int>>();
      n_frames = row.at("n_frames").get<int>();
      feature_file = row.at("feature_file").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const fs::path fpath = dir / feature_file;
    FeatureFile f = read_feature_file(fpath);
    if (f.n_frames != n_frames) {
      throw FormatError(fpath.string() + ": length mismatch (manifest n_frames " +
                        std::to_string(n_frames) + ", file holds " + std::to_string(f.n_frames) +
                        ")");
    }
    if (f.n_mels != corpus.config.n_mels) {
      throw FormatError(fpath.string() + ": n_mels " + std::to_string(f.n_mels) +
                        " differs from corpus n_mels " + std::to_string(corpus.config.n_mels));
    }
    u.f0 = std::move(f.f0);
    u.energy = std::move(f.energy);
    u.mel = std::move(f.mel);
    u.n_mels = f.n_mels;
    try {
      u.validate();
    } catch (const ValidationError& e) {
      throw FormatError(fpath.string() + ": " + e.what());
    }
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace styleweaver
