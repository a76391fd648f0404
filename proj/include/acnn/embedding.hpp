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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "acnn/autodiff.hpp"
#include "acnn/binary_io.hpp"
#include "acnn/corpus.hpp"
#include "acnn/error.hpp"
#include "acnn/random.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// vocab_size x k lookup table. Row 0 is the padding row and stays zero.
struct EmbeddingTable {
  Tensor matrix;
  bool trainable = true;

  std::size_t vocab_size() const { return matrix.dim(0); }
  std::size_t dim() const { return matrix.dim(1); }
};

inline constexpr double kEmbeddingInitRange = 0.05;

// Uniform(-0.05, 0.05) initialization with a zero padding row.
inline EmbeddingTable RandomEmbedding(std::size_t vocab_size, std::size_t k,
                                      std::uint64_t seed) {
  Require(vocab_size >= Vocabulary::kFirstWord && k >= 1, ErrorCode::kConfig,
          "embedding needs k >= 1 and the two reserved rows");
  Rng rng(DeriveSeed(seed, "embedding-init"));
  EmbeddingTable table{Tensor({vocab_size, k})};
  for (std::size_t r = 1; r < vocab_size; ++r)
    for (double& v : table.matrix.row(r)) v = rng.Uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  return table;
}

struct SkipgramConfig {
  std::size_t dim = 200;
  std::size_t iterations = 25;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

namespace detail {

inline double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// Skip-gram with negative sampling. Starts from RandomEmbedding(seed) and
// makes 'iterations' passes over the corpus with a linearly decaying rate.
// Negatives are drawn from the unigram distribution raised to 0.75. Reserved
// ids (padding, unknown) are never trained.
inline EmbeddingTable TrainSkipgram(const Corpus& corpus, const Vocabulary& vocab,
                                    const SkipgramConfig& config) {
  Require(!corpus.empty(), ErrorCode::kConfig, "skip-gram needs a nonempty corpus");
  Require(config.dim >= 1, ErrorCode::kConfig, "embedding dimension must be >= 1");
  const std::size_t words = vocab.size() - Vocabulary::kFirstWord;
  Require(words >= config.negatives + 1, ErrorCode::kConfig,
          "vocabulary of " + std::to_string(words) + " words is smaller than negatives + 1");

  EmbeddingTable table = RandomEmbedding(vocab.size(), config.dim, config.seed);
  if (config.iterations == 0) return table;

  std::vector<std::vector<std::size_t>> docs;
  std::vector<double> counts(vocab.size(), 0.0);
  std::size_t total_tokens = 0;
  for (const CaseRecord& r : corpus.records) {
    std::vector<std::size_t> ids;
    for (const std::string& t : r.tokens) {
      const std::size_t id = vocab.Id(t);
      if (id < Vocabulary::kFirstWord) continue;
      ids.push_back(id);
      counts[id] += 1.0;
    }
    total_tokens += ids.size();
    if (!ids.empty()) docs.push_back(std::move(ids));
  }
  Require(total_tokens > 0, ErrorCode::kConfig, "no in-vocabulary tokens to train on");

  // Cumulative noise distribution over word ids.
  std::vector<double> cumulative(vocab.size(), 0.0);
  double running = 0.0;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    running += id < Vocabulary::kFirstWord ? 0.0 : std::pow(counts[id], 0.75);
    cumulative[id] = running;
  }
  Rng rng(DeriveSeed(config.seed, "skipgram"));
  auto sample_noise = [&] {
    const double target = rng.Uniform() * running;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cumulative.begin(), static_cast<std::ptrdiff_t>(vocab.size()) - 1));
  };

  const std::size_t k = config.dim;
  Tensor context({vocab.size(), k});
  std::vector<double> update(k);
  const double total_steps = static_cast<double>(config.iterations * total_tokens);
  double step = 0.0;
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    for (const auto& doc : docs) {
      for (std::size_t i = 0; i < doc.size(); ++i, step += 1.0) {
        const double lr = std::max(config.learning_rate * (1.0 - step / total_steps),
                                   config.learning_rate * 1e-4);
        const std::size_t reach = 1 + rng.Below(std::max<std::size_t>(config.window, 1));
        const std::size_t lo = i >= reach ? i - reach : 0;
        const std::size_t hi = std::min(doc.size() - 1, i + reach);
        const std::span<double> center = table.matrix.row(doc[i]);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          std::fill(update.begin(), update.end(), 0.0);
          for (std::size_t s = 0; s <= config.negatives; ++s) {
            std::size_t target;
            double label;
            if (s == 0) {
              target = doc[j];
              label = 1.0;
            } else {
              target = sample_noise();
              if (target == doc[j]) continue;
              label = 0.0;
            }
            std::span<double> out = context.row(target);
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += center[c] * out[c];
            const double g = (label - detail::Sigmoid(dot)) * lr;
            for (std::size_t c = 0; c < k; ++c) {
              update[c] += g * out[c];
              out[c] += g * center[c];
            }
          }
          for (std::size_t c = 0; c < k; ++c) center[c] += update[c];
        }
      }
    }
  }
  return table;
}

inline double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

// L x k matrix whose row i is table[ids[i]].
inline Tensor Lookup(const EmbeddingTable& table, std::span<const std::size_t> ids) {
  Tape tape;
  return GatherRows(tape.Constant(table.matrix), ids).value();
}

inline Var Lookup(Var table, std::span<const std::size_t> ids) {
  return GatherRows(table, ids);
}

inline constexpr char kEmbeddingMagic[] = "ACNN-EMBEDDING v1";

inline void SaveEmbedding(const EmbeddingTable& table, const std::string& path,
                          std::uint64_t seed, std::uint64_t corpus_hash) {
  nlohmann::json header;
  header["vocab_size"] = table.vocab_size();
  header["k"] = table.dim();
  header["seed"] = seed;
  header["corpus_hash"] = HexDigest(corpus_hash);
  WriteBlob(path, kEmbeddingMagic, header, table.matrix.data());
}

inline EmbeddingTable LoadEmbedding(const std::string& path) {
  HeaderedBlob blob = ReadBlob(path, kEmbeddingMagic);
  const std::size_t rows = blob.header.at("vocab_size").get<std::size_t>();
  const std::size_t k = blob.header.at("k").get<std::size_t>();
  Require(rows * k == blob.values.size(), ErrorCode::kChecksum,
          "embedding header shape does not match payload");
  return EmbeddingTable{Tensor({rows, k}, std::move(blob.values))};
}

}  // namespace acnn
