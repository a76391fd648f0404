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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "acnn/autodiff.hpp"
#include "acnn/binary_io.hpp"
#include "acnn/corpus.hpp"
#include "acnn/embedding.hpp"
#include "acnn/error.hpp"
#include "acnn/hash.hpp"
#include "acnn/random.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

enum class Architecture { kAcnn, kKimCnn };

inline std::string_view ArchitectureName(Architecture a) {
  return a == Architecture::kAcnn ? "acnn" : "kimcnn";
}

inline Architecture ParseArchitecture(std::string_view name) {
  if (name == "acnn") return Architecture::kAcnn;
  if (name == "kimcnn" || name == "kim") return Architecture::kKimCnn;
  Fail(ErrorCode::kConfig, "unknown architecture '" + std::string(name) + "'");
}

struct ModelConfig {
  Architecture architecture = Architecture::kAcnn;
  std::vector<std::size_t> windows = {1, 2, 3, 4, 5};
  std::size_t filters = 128;
  std::size_t attention = 100;
  std::vector<std::size_t> hidden = {256, 64};
  // Drop probability applied after every hidden activation in training.
  double dropout = 0.8;
  std::size_t classes = kNumClasses;
  std::size_t max_len = 40;
  std::size_t embedding_dim = 200;
  std::size_t vocab_size = 0;

  std::size_t PooledSize() const { return windows.size() * filters; }
  std::size_t MlpInputSize() const { return PooledSize() + kDemographicsSize; }
  std::size_t MaxWindow() const {
    return windows.empty() ? 0 : *std::max_element(windows.begin(), windows.end());
  }

  void Validate() const {
    auto check = [](bool ok, const std::string& what) { Require(ok, ErrorCode::kConfig, what); };
    check(!windows.empty(), "at least one window width is required");
    for (std::size_t m : windows) {
      check(m >= 1, "window widths must be positive");
      check(m <= max_len, "window width " + std::to_string(m) + " exceeds max_len " +
                              std::to_string(max_len));
    }
    std::vector<std::size_t> sorted = windows;
    std::sort(sorted.begin(), sorted.end());
    check(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          "duplicate window width");
    check(filters >= 1 && attention >= 1 && embedding_dim >= 1 && max_len >= 1,
          "model sizes must be positive");
    for (std::size_t h : hidden) check(h >= 1, "hidden layer sizes must be positive");
    check(classes == kNumClasses, "class count must be 3");
    check(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
    check(vocab_size >= Vocabulary::kFirstWord, "vocab_size must cover the reserved ids");
  }

  std::uint64_t Hash() const {
    Fnv1a h;
    h.Update(std::string_view("model-config-v1"));
    h.Update(static_cast<std::uint64_t>(architecture));
    h.Update(static_cast<std::uint64_t>(windows.size()));
    for (std::size_t m : windows) h.Update(static_cast<std::uint64_t>(m));
    h.Update(static_cast<std::uint64_t>(hidden.size()));
    for (std::size_t v : hidden) h.Update(static_cast<std::uint64_t>(v));
    for (std::size_t v : {filters, attention, classes, max_len, embedding_dim, vocab_size})
      h.Update(static_cast<std::uint64_t>(v));
    h.Update(dropout);
    return h.Digest();
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"architecture", std::string(ArchitectureName(c.architecture))},
                     {"windows", c.windows},
                     {"filters", c.filters},
                     {"attention", c.attention},
                     {"hidden", c.hidden},
                     {"dropout", c.dropout},
                     {"classes", c.classes},
                     {"max_len", c.max_len},
                     {"embedding_dim", c.embedding_dim},
                     {"vocab_size", c.vocab_size}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.architecture = ParseArchitecture(j.value("architecture", std::string(ArchitectureName(c.architecture))));
  c.windows = j.value("windows", c.windows);
  c.filters = j.value("filters", c.filters);
  c.attention = j.value("attention", c.attention);
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.classes = j.value("classes", c.classes);
  c.max_len = j.value("max_len", c.max_len);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
}

// Per window width: conv filter bank and, for the attention model, the
// one-layer attention network and its context vector.
struct WidthParams {
  std::size_t width = 1;
  Tensor filters;    // m x k x f
  Tensor bias;       // f
  Tensor attn_w;     // f x attention   (ACNN only)
  Tensor attn_b;     // attention       (ACNN only)
  Tensor context;    // attention       (ACNN only)
};

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out
};

// Parameter order (serialization, gradient checking, optimizer state):
//   embedding,
//   for each width in config order: filters, bias[, attn_w, attn_b, context],
//   for each dense layer (hidden..., output): weight, bias.
struct ModelParams {
  ModelConfig config;
  Tensor embedding;  // vocab_size x k
  std::vector<WidthParams> widths;
  std::vector<DenseLayer> layers;

  std::vector<Tensor*> Tensors() {
    std::vector<Tensor*> out = {&embedding};
    for (WidthParams& w : widths) {
      out.push_back(&w.filters);
      out.push_back(&w.bias);
      if (config.architecture == Architecture::kAcnn) {
        out.push_back(&w.attn_w);
        out.push_back(&w.attn_b);
        out.push_back(&w.context);
      }
    }
    for (DenseLayer& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<const Tensor*> Tensors() const {
    std::vector<const Tensor*> out;
    for (Tensor* t : const_cast<ModelParams*>(this)->Tensors()) out.push_back(t);
    return out;
  }

  std::size_t ParameterCount() const {
    std::size_t n = 0;
    for (const Tensor* t : Tensors()) n += t->size();
    return n;
  }

  std::vector<double> Flatten() const {
    std::vector<double> flat;
    flat.reserve(ParameterCount());
    for (const Tensor* t : Tensors()) flat.insert(flat.end(), t->data().begin(), t->data().end());
    return flat;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.config.Hash() != b.config.Hash()) return false;
    auto ta = a.Tensors();
    auto tb = b.Tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(*ta[i] == *tb[i])) return false;
    return true;
  }
};

namespace detail {

inline Tensor GlorotUniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.Uniform(-limit, limit);
  return t;
}

}  // namespace detail

// Shapes for the config with every value zero.
inline ModelParams ZeroParams(const ModelConfig& config) {
  config.Validate();
  ModelParams p;
  p.config = config;
  const std::size_t k = config.embedding_dim, f = config.filters, a = config.attention;
  p.embedding = Tensor({config.vocab_size, k});
  for (std::size_t m : config.windows) {
    WidthParams w;
    w.width = m;
    w.filters = Tensor({m, k, f});
    w.bias = Tensor({f});
    if (config.architecture == Architecture::kAcnn) {
      w.attn_w = Tensor({f, a});
      w.attn_b = Tensor({a});
      w.context = Tensor({a});
    }
    p.widths.push_back(std::move(w));
  }
  std::size_t in = config.MlpInputSize();
  std::vector<std::size_t> sizes = config.hidden;
  sizes.push_back(config.classes);
  for (std::size_t out : sizes) {
    p.layers.push_back({Tensor({in, out}), Tensor({out})});
    in = out;
  }
  return p;
}

// Glorot-uniform weights, zero biases, uniform(-0.05, 0.05) embeddings with
// a zero padding row. Deterministic in seed.
inline ModelParams InitParams(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = ZeroParams(config);
  p.embedding = RandomEmbedding(config.vocab_size, config.embedding_dim, seed).matrix;
  Rng rng(DeriveSeed(seed, "init"));
  const std::size_t k = config.embedding_dim, f = config.filters, a = config.attention;
  for (WidthParams& w : p.widths) {
    w.filters = detail::GlorotUniform(rng, {w.width, k, f}, w.width * k, f);
    if (config.architecture == Architecture::kAcnn) {
      w.attn_w = detail::GlorotUniform(rng, {f, a}, f, a);
      w.context = detail::GlorotUniform(rng, {a}, a, 1);
    }
  }
  for (DenseLayer& l : p.layers)
    l.weight = detail::GlorotUniform(rng, l.weight.shape(), l.weight.dim(0), l.weight.dim(1));
  return p;
}

// Replaces the embedding table, e.g. with a pre-trained one.
inline void SetEmbedding(ModelParams& params, const EmbeddingTable& table) {
  Require(table.matrix.shape() == params.embedding.shape(), ErrorCode::kConfig,
          "embedding table " + ShapeString(table.matrix.shape()) + " does not match model " +
              ShapeString(params.embedding.shape()));
  params.embedding = table.matrix;
  for (double& v : params.embedding.row(Vocabulary::kPadding)) v = 0.0;
}

// ---------------------------------------------------------------------------
// Forward pass

// Normalized attention weights per width, over all L - m + 1 window
// positions (masked positions hold 0), plus the pooled document vectors.
struct AttentionRecord {
  std::vector<std::size_t> widths;
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> document;

  bool empty() const { return alpha.empty(); }

  const std::vector<double>& AlphaFor(std::size_t width) const {
    for (std::size_t i = 0; i < widths.size(); ++i)
      if (widths[i] == width) return alpha[i];
    Fail(ErrorCode::kConfig, "no attention record for width " + std::to_string(width));
  }
};

struct Prediction {
  std::array<double, kNumClasses> probabilities{};
  TriageClass predicted = TriageClass::kUrgentCare;
  double confidence = 0.0;
  AttentionRecord attention;
};

// Handles produced by one forward pass on a tape.
struct ForwardTrace {
  Var probabilities;
  std::vector<Var> alphas;   // ACNN: per width, length = valid positions
  std::vector<Var> pooled;   // per width, length f
  std::vector<std::size_t> positions;  // valid window positions per width
};

// Number of window positions of width m that touch at least one real token;
// positions lying entirely in right padding are masked.
inline std::size_t ValidPositions(std::size_t max_len, std::size_t length, std::size_t m) {
  return std::min(std::max<std::size_t>(length, 1), max_len - m + 1);
}

struct DropoutSource {
  Rng* rng = nullptr;
  double rate = 0.0;
};

// Records the full model on a tape. 'leaves' follow ModelParams::Tensors()
// order. Dropout is applied only when 'dropout.rng' is set and the rate is
// positive.
inline ForwardTrace BuildForward(const ModelConfig& config, std::span<const Var> leaves,
                                 const EncodedCase& doc, DropoutSource dropout = {}) {
  Require(doc.ids.size() == config.max_len, ErrorCode::kInvalidShape,
          "encoded case has " + std::to_string(doc.ids.size()) + " ids, model expects " +
              std::to_string(config.max_len));
  Tape& tape = *leaves.front().tape();
  const bool attention = config.architecture == Architecture::kAcnn;
  std::size_t cursor = 0;
  Var embedding = leaves[cursor++];

  std::size_t rows = 1;
  std::vector<std::size_t> positions;
  for (std::size_t m : config.windows) {
    positions.push_back(ValidPositions(config.max_len, doc.length, m));
    rows = std::max(rows, positions.back() + m - 1);
  }
  Var embedded = GatherRows(embedding, std::span<const std::size_t>(doc.ids).first(rows));

  ForwardTrace trace;
  trace.positions = positions;
  std::vector<Var> parts;
  for (std::size_t i = 0; i < config.windows.size(); ++i) {
    Var filters = leaves[cursor++];
    Var bias = leaves[cursor++];
    Var features = NgramConv(embedded, filters, bias, positions[i]);
    Var pooled;
    if (attention) {
      Var attn_w = leaves[cursor++];
      Var attn_b = leaves[cursor++];
      Var context = leaves[cursor++];
      Var hidden = Tanh(AddBias(MatMul(features, attn_w), attn_b));
      Var alpha = Softmax(MatVec(hidden, context));
      pooled = WeightedRowSum(features, alpha);
      trace.alphas.push_back(alpha);
    } else {
      pooled = MaxRows(features);
    }
    trace.pooled.push_back(pooled);
    parts.push_back(pooled);
  }
  parts.push_back(tape.Constant(Tensor::Vector(
      std::vector<double>(doc.demographics.begin(), doc.demographics.end()))));
  Var h = Concat(parts);

  const std::size_t layers = config.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    Var weight = leaves[cursor++];
    Var bias = leaves[cursor++];
    h = AddBias(VecMat(h, weight), bias);
    if (l + 1 == layers) break;
    h = Relu(h);
    if (dropout.rng != nullptr && dropout.rate > 0.0) {
      const double keep = 1.0 - dropout.rate;
      Tensor mask(h.value().shape());
      for (double& v : mask.data()) v = dropout.rng->Bernoulli(keep) ? 1.0 / keep : 0.0;
      h = ApplyMask(h, mask);
    }
  }
  trace.probabilities = Softmax(h);
  return trace;
}

inline std::vector<Var> BorrowLeaves(Tape& tape, const ModelParams& params) {
  std::vector<Var> leaves;
  for (const Tensor* t : params.Tensors()) leaves.push_back(tape.Borrow(*t));
  return leaves;
}

// Leaves whose gradients accumulate into the matching tensors of 'grads'
// (same configuration as 'params').
inline std::vector<Var> ParameterLeaves(Tape& tape, const ModelParams& params, ModelParams& grads) {
  std::vector<Var> leaves;
  auto values = params.Tensors();
  auto sinks = grads.Tensors();
  Require(values.size() == sinks.size(), ErrorCode::kInvalidShape, "gradient store mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    leaves.push_back(tape.Parameter(*values[i], sinks[i]->data()));
  return leaves;
}

inline Prediction MakePrediction(const ModelConfig& config, const ForwardTrace& trace) {
  Prediction p;
  const Tensor& probs = trace.probabilities.value();
  std::size_t best = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] = probs[c];
    if (probs[c] > probs[best]) best = c;
  }
  p.predicted = kAllClasses[best];
  p.confidence = probs[best];
  if (config.architecture == Architecture::kAcnn) {
    for (std::size_t i = 0; i < config.windows.size(); ++i) {
      const std::size_t m = config.windows[i];
      std::vector<double> alpha(config.max_len - m + 1, 0.0);
      const Tensor& a = trace.alphas[i].value();
      std::copy(a.data().begin(), a.data().end(), alpha.begin());
      p.attention.widths.push_back(m);
      p.attention.alpha.push_back(std::move(alpha));
      const Tensor& s = trace.pooled[i].value();
      p.attention.document.emplace_back(s.data().begin(), s.data().end());
    }
  }
  return p;
}

// Inference-mode forward (no dropout).
inline Prediction Forward(const ModelParams& params, const EncodedCase& doc) {
  Tape tape;
  std::vector<Var> leaves = BorrowLeaves(tape, params);
  return MakePrediction(params.config, BuildForward(params.config, leaves, doc));
}

// Training-mode forward: dropout masks drawn from 'rng'.
inline Prediction Forward(const ModelParams& params, const EncodedCase& doc, Rng& rng) {
  Tape tape;
  std::vector<Var> leaves = BorrowLeaves(tape, params);
  return MakePrediction(params.config,
                        BuildForward(params.config, leaves, doc, {&rng, params.config.dropout}));
}

inline std::size_t WidthIndex(const ModelConfig& config, std::size_t width) {
  for (std::size_t i = 0; i < config.windows.size(); ++i)
    if (config.windows[i] == width) return i;
  Fail(ErrorCode::kConfig, "model has no window of width " + std::to_string(width));
}

// Feature map of one width over every window position: (L - m + 1) x f.
inline Tensor NgramEncode(const ModelParams& params, const Tensor& embedded, std::size_t width) {
  const WidthParams& w = params.widths[WidthIndex(params.config, width)];
  Tape tape;
  return NgramConv(tape.Borrow(embedded), tape.Borrow(w.filters), tape.Borrow(w.bias)).value();
}

struct Attended {
  std::vector<double> document;  // s, length f
  std::vector<double> alpha;     // length T
};

// Attention pooling of a T x f feature map with the width's parameters.
inline Attended Attend(const ModelParams& params, const Tensor& features, std::size_t width) {
  Require(params.config.architecture == Architecture::kAcnn, ErrorCode::kConfig,
          "attention pooling needs an ACNN model");
  const WidthParams& w = params.widths[WidthIndex(params.config, width)];
  Tape tape;
  Var v = tape.Borrow(features);
  Var hidden = Tanh(AddBias(MatMul(v, tape.Borrow(w.attn_w)), tape.Borrow(w.attn_b)));
  Var alpha = Softmax(MatVec(hidden, tape.Borrow(w.context)));
  Var s = WeightedRowSum(v, alpha);
  return {{s.value().data().begin(), s.value().data().end()},
          {alpha.value().data().begin(), alpha.value().data().end()}};
}

// Cross-entropy of one case, recorded on the tape.
inline Var CaseLoss(const ModelConfig& config, std::span<const Var> leaves,
                    const EncodedCase& doc, DropoutSource dropout = {}) {
  return CrossEntropy(BuildForward(config, leaves, doc, dropout).probabilities,
                      ClassIndex(doc.label));
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr char kModelMagic[] = "ACNN-MODEL v1";
inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  ModelParams params;
  std::uint64_t seed = 0;
  std::uint64_t corpus_hash = 0;
  std::vector<std::string> vocabulary;  // id order, reserved ids included
};

inline std::string EncodeModel(const ModelFile& file) {
  nlohmann::json header;
  header["format_version"] = kModelFormatVersion;
  header["config"] = file.params.config;
  header["config_hash"] = HexDigest(file.params.config.Hash());
  header["seed"] = file.seed;
  header["corpus_hash"] = HexDigest(file.corpus_hash);
  header["vocabulary"] = file.vocabulary;
  const std::vector<double> flat = file.params.Flatten();
  return EncodeBlob(kModelMagic, header, flat);
}

inline void SaveModel(const ModelFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << EncodeModel(file);
  Require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

inline ModelFile DecodeModel(const std::string& bytes,
                             const std::optional<ModelConfig>& expected = std::nullopt) {
  HeaderedBlob blob = DecodeBlob(bytes, kModelMagic);
  Require(blob.header.value("format_version", 0) == kModelFormatVersion, ErrorCode::kChecksum,
          "unsupported model format version");
  ModelFile file;
  ModelConfig config;
  try {
    config = blob.header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kChecksum, std::string("corrupt model config: ") + e.what());
  }
  Require(HexDigest(config.Hash()) == blob.header.value("config_hash", std::string()),
          ErrorCode::kChecksum, "config hash mismatch");
  if (expected) {
    Require(expected->Hash() == config.Hash(), ErrorCode::kChecksum,
            "model file config does not match the expected configuration");
  }
  file.params = ZeroParams(config);
  Require(file.params.ParameterCount() == blob.values.size(), ErrorCode::kChecksum,
          "parameter blob has " + std::to_string(blob.values.size()) + " values, config needs " +
              std::to_string(file.params.ParameterCount()));
  std::size_t offset = 0;
  for (Tensor* t : file.params.Tensors()) {
    std::copy_n(blob.values.begin() + static_cast<std::ptrdiff_t>(offset), t->size(), t->data().begin());
    offset += t->size();
  }
  file.seed = blob.header.value("seed", std::uint64_t{0});
  const std::string corpus_hash = blob.header.value("corpus_hash", std::string("0"));
  file.corpus_hash = std::stoull(corpus_hash, nullptr, 16);
  file.vocabulary = blob.header.value("vocabulary", std::vector<std::string>{});
  return file;
}

inline ModelFile LoadModel(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt) {
  return DecodeModel(ReadFileBytes(path), expected);
}

inline Vocabulary VocabularyFromTokens(const std::vector<std::string>& tokens) {
  Require(tokens.size() >= Vocabulary::kFirstWord, ErrorCode::kChecksum,
          "vocabulary lacks reserved entries");
  return Vocabulary(std::vector<std::string>(tokens.begin() + Vocabulary::kFirstWord, tokens.end()));
}

}  // namespace acnn
