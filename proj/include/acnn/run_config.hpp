// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "acnn/corpus.hpp"
#include "acnn/embedding.hpp"
#include "acnn/error.hpp"
#include "acnn/model.hpp"
#include "acnn/random.hpp"
#include "acnn/train.hpp"

namespace acnn {

inline void RequireKnownKeys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                             std::string_view section) {
  Require(j.is_object(), ErrorCode::kConfig, std::string(section) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view k : keys) known = known || key == k;
    Require(known, ErrorCode::kConfig,
            "unknown key '" + key + "' in " + std::string(section));
  }
}

inline void to_json(nlohmann::json& j, const LengthRange& r) {
  j = {{"min", r.min}, {"mean", r.mean}, {"max", r.max}};
}

inline void from_json(const nlohmann::json& j, LengthRange& r) {
  RequireKnownKeys(j, {"min", "mean", "max"}, "length range");
  r.min = j.value("min", r.min);
  r.mean = j.value("mean", r.mean);
  r.max = j.value("max", r.max);
}

inline void to_json(nlohmann::json& j, const GeneratorSpec& g) {
  j = {{"red_flag_singles", g.red_flag_singles},
       {"red_flag_pairs", g.red_flag_pairs},
       {"moderate_symptoms", g.moderate_symptoms},
       {"benign_symptoms", g.benign_symptoms},
       {"negated_symptoms", g.negated_symptoms},
       {"filler_words", g.filler_words},
       {"proportions", g.proportions},
       {"lengths", g.lengths},
       {"p_noise", g.p_noise},
       {"label_noise", g.label_noise},
       {"mode", std::string(ModeName(g.mode))},
       {"pair_case_fraction", g.pair_case_fraction},
       {"lone_pair_member_rate", g.lone_pair_member_rate},
       {"second_flag_rate", g.second_flag_rate},
       {"filler_per_symptom", g.filler_per_symptom}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& g) {
  RequireKnownKeys(j,
                   {"red_flag_singles", "red_flag_pairs", "moderate_symptoms", "benign_symptoms",
                    "negated_symptoms", "filler_words", "proportions", "lengths", "p_noise",
                    "label_noise", "mode", "pair_case_fraction", "lone_pair_member_rate",
                    "second_flag_rate", "filler_per_symptom"},
                   "generator");
  g.red_flag_singles = j.value("red_flag_singles", g.red_flag_singles);
  g.red_flag_pairs = j.value("red_flag_pairs", g.red_flag_pairs);
  g.moderate_symptoms = j.value("moderate_symptoms", g.moderate_symptoms);
  g.benign_symptoms = j.value("benign_symptoms", g.benign_symptoms);
  g.negated_symptoms = j.value("negated_symptoms", g.negated_symptoms);
  g.filler_words = j.value("filler_words", g.filler_words);
  g.proportions = j.value("proportions", g.proportions);
  g.lengths = j.value("lengths", g.lengths);
  g.p_noise = j.value("p_noise", g.p_noise);
  g.label_noise = j.value("label_noise", g.label_noise);
  if (j.contains("mode")) g.mode = ParseMode(j.at("mode").get<std::string>());
  g.pair_case_fraction = j.value("pair_case_fraction", g.pair_case_fraction);
  g.lone_pair_member_rate = j.value("lone_pair_member_rate", g.lone_pair_member_rate);
  g.second_flag_rate = j.value("second_flag_rate", g.second_flag_rate);
  g.filler_per_symptom = j.value("filler_per_symptom", g.filler_per_symptom);
}

inline void to_json(nlohmann::json& j, const SplitRatios& r) {
  j = {{"train", r.train}, {"validation", r.validation}, {"test", r.test}};
}

inline void from_json(const nlohmann::json& j, SplitRatios& r) {
  RequireKnownKeys(j, {"train", "validation", "test"}, "split");
  r.train = j.value("train", r.train);
  r.validation = j.value("validation", r.validation);
  r.test = j.value("test", r.test);
}

// Skip-gram settings; the vector size follows the model's embedding size.
struct SkipgramSettings {
  std::size_t iterations = 5;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double learning_rate = 0.025;
};

inline void to_json(nlohmann::json& j, const SkipgramSettings& s) {
  j = {{"iterations", s.iterations},
       {"window", s.window},
       {"negatives", s.negatives},
       {"learning_rate", s.learning_rate}};
}

inline void from_json(const nlohmann::json& j, SkipgramSettings& s) {
  RequireKnownKeys(j, {"iterations", "window", "negatives", "learning_rate"}, "skipgram");
  s.iterations = j.value("iterations", s.iterations);
  s.window = j.value("window", s.window);
  s.negatives = j.value("negatives", s.negatives);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
}

// Per-subsystem seeds. Unset entries derive from the root seed.
struct SeedPlan {
  std::uint64_t data = 0;
  std::uint64_t split = 0;
  std::uint64_t embedding = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;  // minibatch order and dropout
  std::uint64_t drop = 0;
};

inline void to_json(nlohmann::json& j, const SeedPlan& s) {
  j = {{"data", s.data}, {"split", s.split}, {"embedding", s.embedding},
       {"init", s.init}, {"train", s.train}, {"drop", s.drop}};
}

// The model and training settings default to a desk-scale network; the
// larger published sizes are a config file away.
inline ModelConfig DeskModelConfig() {
  ModelConfig c;
  c.filters = 16;
  c.attention = 16;
  c.hidden = {64, 32};
  c.dropout = 0.2;
  c.embedding_dim = 32;
  return c;
}

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t corpus_size = 5000;
  GeneratorSpec generator;
  SplitRatios split;
  std::size_t min_count = 1;
  bool remove_stopwords = false;
  SkipgramSettings skipgram;
  ModelConfig model = DeskModelConfig();
  HyperParams hyper;
  GridSpec grid{{0.001, 0.003}, {64}, {1e-4}, {0.2, 0.5}};
  std::map<std::string, std::uint64_t> seed_overrides;

  SeedPlan Seeds() const {
    auto pick = [&](const char* name) {
      auto it = seed_overrides.find(name);
      return it != seed_overrides.end() ? it->second : DeriveSeed(seed, name);
    };
    return {pick("data"), pick("split"), pick("embedding"),
            pick("init"), pick("train"), pick("drop")};
  }

  void Validate() const {
    generator.Validate();
    Require(corpus_size >= 10, ErrorCode::kConfig, "corpus_size must be at least 10");
    Require(min_count >= 1, ErrorCode::kConfig, "min_count must be at least 1");
    Require(std::abs(split.train + split.validation + split.test - 1.0) < 1e-9 &&
                split.train > 0 && split.validation > 0 && split.test > 0,
            ErrorCode::kConfig, "split ratios must be positive and sum to 1");
    hyper.Validate();
    grid.Validate();
    for (const auto& [name, value] : seed_overrides) {
      (void)value;
      Require(name == "data" || name == "split" || name == "embedding" || name == "init" ||
                  name == "train" || name == "drop",
              ErrorCode::kConfig, "unknown seed stream '" + name + "'");
    }
  }
};

inline HyperParams ResolveHyper(const RunConfig& config) {
  HyperParams h = config.hyper;
  h.seed = config.Seeds().train;
  return h;
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"corpus_size", c.corpus_size},
       {"generator", c.generator},
       {"split", c.split},
       {"min_count", c.min_count},
       {"remove_stopwords", c.remove_stopwords},
       {"skipgram", c.skipgram},
       {"model", c.model},
       {"hyper", ResolveHyper(c)},
       {"grid", c.grid},
       {"seeds", c.Seeds()}};
}

// Values present in 'j' replace those in 'c'.
inline void MergeRunConfig(const nlohmann::json& j, RunConfig& c) {
  RequireKnownKeys(j,
                   {"seed", "corpus_size", "generator", "split", "min_count", "remove_stopwords",
                    "skipgram", "model", "hyper", "grid", "seeds"},
                   "config");
  c.seed = j.value("seed", c.seed);
  c.corpus_size = j.value("corpus_size", c.corpus_size);
  if (j.contains("generator")) from_json(j.at("generator"), c.generator);
  if (j.contains("split")) from_json(j.at("split"), c.split);
  c.min_count = j.value("min_count", c.min_count);
  c.remove_stopwords = j.value("remove_stopwords", c.remove_stopwords);
  if (j.contains("skipgram")) from_json(j.at("skipgram"), c.skipgram);
  if (j.contains("model")) {
    RequireKnownKeys(j.at("model"),
                     {"architecture", "windows", "filters", "attention", "hidden", "dropout",
                      "classes", "max_len", "embedding_dim", "vocab_size"},
                     "model");
    from_json(j.at("model"), c.model);
  }
  if (j.contains("hyper")) {
    RequireKnownKeys(j.at("hyper"),
                     {"learning_rate", "batch_size", "epochs", "weight_decay", "beta1", "beta2",
                      "epsilon", "freeze_embedding", "seed"},
                     "hyper");
    from_json(j.at("hyper"), c.hyper);
    if (j.at("hyper").contains("seed")) c.seed_overrides["train"] = c.hyper.seed;
  }
  if (j.contains("grid")) {
    RequireKnownKeys(j.at("grid"), {"learning_rates", "batch_sizes", "weight_decays", "dropouts"},
                     "grid");
    from_json(j.at("grid"), c.grid);
  }
  if (j.contains("seeds")) {
    for (const auto& [name, value] : j.at("seeds").items())
      c.seed_overrides[name] = value.get<std::uint64_t>();
  }
}

inline RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, "config " + path + ": " + e.what());
  }
  RunConfig c;
  MergeRunConfig(j, c);
  return c;
}

// Corpus split and vocabulary derived deterministically from a corpus and
// the run configuration. The vocabulary comes from the training split.
struct PreparedData {
  DatasetSplit split;
  Vocabulary vocab;
};

inline PreparedData Prepare(const Corpus& corpus, const RunConfig& config) {
  PreparedData d;
  d.split = SplitCorpus(corpus, config.split, config.Seeds().split);
  d.vocab = BuildVocab(d.split.train, config.min_count,
                       config.remove_stopwords ? DefaultStopwords() : std::vector<std::string>{});
  return d;
}

inline SkipgramConfig ResolveSkipgram(const RunConfig& config) {
  SkipgramConfig s;
  s.dim = config.model.embedding_dim;
  s.iterations = config.skipgram.iterations;
  s.window = config.skipgram.window;
  s.negatives = config.skipgram.negatives;
  s.learning_rate = config.skipgram.learning_rate;
  s.seed = config.Seeds().embedding;
  return s;
}

inline ModelConfig ResolveModel(const RunConfig& config, const Vocabulary& vocab,
                                Architecture arch) {
  ModelConfig m = config.model;
  m.architecture = arch;
  m.vocab_size = vocab.size();
  m.Validate();
  return m;
}

}  // namespace acnn
