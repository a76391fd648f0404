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
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "acnn/corpus.hpp"
#include "acnn/error.hpp"
#include "acnn/metrics.hpp"
#include "acnn/model.hpp"
#include "acnn/random.hpp"

namespace acnn {

// A contiguous n-gram of tokens.
using Feature = std::vector<std::string>;

inline std::string FeatureText(const Feature& f) {
  std::string out;
  for (const std::string& t : f) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

struct SymptomScore {
  Feature feature;
  TriageClass cls = TriageClass::kUrgentCare;
  double score = 0.0;           // mean of per-case normalized attention
  std::size_t occurrences = 0;  // class cases containing the feature
  double mean_attention = 0.0;  // mean of the raw attention weights

  friend bool operator==(const SymptomScore&, const SymptomScore&) = default;
};

namespace detail {

struct ScoreAccumulator {
  double normalized = 0.0;
  double raw = 0.0;
  std::size_t cases = 0;
};

inline void RequireScorable(const ModelConfig& config, std::size_t gram) {
  Require(config.architecture == Architecture::kAcnn, ErrorCode::kConfig,
          "symptom scores need an attention model");
  Require(std::find(config.windows.begin(), config.windows.end(), gram) != config.windows.end(),
          ErrorCode::kConfig,
          "model has no window of width " + std::to_string(gram));
}

}  // namespace detail

// Attention scores of the n-grams occurring in cases labelled 'cls'. Each
// case contributes, per feature, its largest width-n attention weight divided
// by the case's largest width-n weight; the score is the mean over the class
// cases containing the feature. Windows reaching into padding are not
// features. Sorted by score, then feature text.
inline std::vector<SymptomScore> ScoreFeatures(const ModelConfig& config,
                                               std::span<const Prediction> predictions,
                                               std::span<const EncodedCase> cases,
                                               const Vocabulary& vocab, TriageClass cls,
                                               std::size_t gram) {
  detail::RequireScorable(config, gram);
  Require(predictions.size() == cases.size(), ErrorCode::kInvalidShape,
          "prediction count does not match cases");
  const std::size_t w = WidthIndex(config, gram);
  std::map<std::vector<std::size_t>, detail::ScoreAccumulator> table;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const EncodedCase& doc = cases[i];
    if (doc.label != cls) continue;
    const std::vector<double>& alpha = predictions[i].attention.alpha[w];
    const std::size_t positions = ValidPositions(config.max_len, doc.length, gram);
    const double peak = *std::max_element(alpha.begin(), alpha.begin() + positions);
    std::map<std::vector<std::size_t>, double> best;
    for (std::size_t t = 0; t < positions; ++t) {
      if (t + gram > doc.length) break;
      std::vector<std::size_t> key(doc.ids.begin() + t, doc.ids.begin() + t + gram);
      auto [it, fresh] = best.try_emplace(std::move(key), alpha[t]);
      if (!fresh) it->second = std::max(it->second, alpha[t]);
    }
    for (const auto& [key, att] : best) {
      detail::ScoreAccumulator& acc = table[key];
      acc.normalized += peak > 0.0 ? att / peak : 0.0;
      acc.raw += att;
      ++acc.cases;
    }
  }
  std::vector<SymptomScore> out;
  out.reserve(table.size());
  for (const auto& [key, acc] : table) {
    SymptomScore s;
    for (std::size_t id : key) s.feature.push_back(vocab.Token(id));
    s.cls = cls;
    s.occurrences = acc.cases;
    s.score = acc.normalized / static_cast<double>(acc.cases);
    s.mean_attention = acc.raw / static_cast<double>(acc.cases);
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const SymptomScore& a, const SymptomScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.feature < b.feature;
  });
  return out;
}

inline std::vector<SymptomScore> ScoreFeatures(const ModelParams& params,
                                               std::span<const EncodedCase> cases,
                                               const Vocabulary& vocab, TriageClass cls,
                                               std::size_t gram) {
  detail::RequireScorable(params.config, gram);
  std::vector<Prediction> predictions(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i)
    if (cases[i].label == cls) predictions[i] = Forward(params, cases[i]);
  return ScoreFeatures(params.config, predictions, cases, vocab, cls, gram);
}

inline const SymptomScore* FindScore(std::span<const SymptomScore> scores, const Feature& f) {
  for (const SymptomScore& s : scores)
    if (s.feature == f) return &s;
  return nullptr;
}

struct PairSynergy {
  std::string first;
  std::string second;
  double score_first = 0.0;
  double score_second = 0.0;
  double score_pair = 0.0;
  double margin = 0.0;  // pair - max(member)
};

// Bigrams whose members are both scored, ranked by margin. With
// 'positive_only', only pairs outscoring both members are kept.
inline std::vector<PairSynergy> PairSynergies(std::span<const SymptomScore> unigrams,
                                              std::span<const SymptomScore> bigrams,
                                              TriageClass cls, bool positive_only = true) {
  std::unordered_map<std::string, double> single;
  for (const SymptomScore& s : unigrams)
    if (s.cls == cls && s.feature.size() == 1) single[s.feature[0]] = s.score;
  std::vector<PairSynergy> out;
  for (const SymptomScore& s : bigrams) {
    if (s.cls != cls || s.feature.size() != 2) continue;
    auto a = single.find(s.feature[0]);
    auto b = single.find(s.feature[1]);
    if (a == single.end() || b == single.end()) continue;
    PairSynergy p{s.feature[0], s.feature[1], a->second, b->second, s.score,
                  s.score - std::max(a->second, b->second)};
    if (positive_only && p.margin <= 0.0) continue;
    out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PairSynergy& x, const PairSynergy& y) { return x.margin > y.margin; });
  return out;
}

enum class DropKind { kRandom, kFrequency, kAttention };

inline std::string_view DropKindName(DropKind k) {
  switch (k) {
    case DropKind::kRandom: return "Random";
    case DropKind::kFrequency: return "Frequency";
    case DropKind::kAttention: return "Attention";
  }
  return "?";
}

struct DropStrategy {
  DropKind kind = DropKind::kAttention;
  std::size_t k = 1;
  std::uint64_t seed = 1;
};

// Token ranking used by the Frequency and Attention strategies.
using TokenRanking = std::unordered_map<std::string, double>;

inline TokenRanking RankingFromScores(std::span<const SymptomScore> unigrams) {
  TokenRanking r;
  for (const SymptomScore& s : unigrams)
    if (s.feature.size() == 1) r[s.feature[0]] = s.score;
  return r;
}

// Occurrence counts of every token over the cases labelled 'cls'.
inline TokenRanking ClassFrequencies(const Corpus& corpus, TriageClass cls) {
  TokenRanking r;
  for (const CaseRecord& rec : corpus.records)
    if (rec.label == cls)
      for (const std::string& t : rec.tokens) r[t] += 1.0;
  return r;
}

// Removes min(k, len - 1) tokens from every case. Frequency and Attention
// remove the highest-ranked tokens present (unranked tokens last, earlier
// positions first on ties); Random removes uniformly chosen positions.
inline Corpus DropTokens(const Corpus& corpus, const DropStrategy& strategy,
                         const TokenRanking& ranking = {}) {
  Require(strategy.k >= 1, ErrorCode::kConfig, "drop count must be at least 1");
  Corpus out = corpus;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    std::vector<std::string>& tokens = out.records[i].tokens;
    if (tokens.empty()) continue;
    const std::size_t remove = std::min(strategy.k, tokens.size() - 1);
    if (remove == 0) continue;
    std::vector<std::size_t> order(tokens.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (strategy.kind == DropKind::kRandom) {
      Rng rng(DeriveSeed(strategy.seed, "drop", i));
      rng.Shuffle(order);
    } else {
      auto rank = [&](std::size_t pos) {
        auto it = ranking.find(tokens[pos]);
        return it == ranking.end() ? -1.0 : it->second;
      };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return rank(a) > rank(b); });
    }
    std::vector<bool> dropped(tokens.size(), false);
    for (std::size_t j = 0; j < remove; ++j) dropped[order[j]] = true;
    std::vector<std::string> kept;
    for (std::size_t p = 0; p < tokens.size(); ++p)
      if (!dropped[p]) kept.push_back(std::move(tokens[p]));
    tokens = std::move(kept);
    out.records[i].planted_flags.clear();
  }
  return out;
}

struct DropRow {
  std::string label;
  Metrics metrics;
};

struct DropInputs {
  TokenRanking attention;  // class-c unigram scores
  TokenRanking frequency;  // class-c counts on the training split
  std::uint64_t seed = 1;
};

// Baseline, then Random, Frequency and Attention for one drop, then the same
// three with two drops when 'max_drops' is 2.
inline std::vector<DropRow> DropExperiment(const ModelParams& params, const Corpus& test,
                                           const Vocabulary& vocab, const DropInputs& inputs,
                                           std::size_t max_drops) {
  Require(max_drops == 1 || max_drops == 2, ErrorCode::kConfig, "drops must be 1 or 2");
  std::vector<DropRow> rows;
  rows.push_back({"Baseline", Evaluate(params, EncodeAll(test, vocab, params.config.max_len))});
  for (std::size_t k = 1; k <= max_drops; ++k) {
    for (DropKind kind : {DropKind::kRandom, DropKind::kFrequency, DropKind::kAttention}) {
      const TokenRanking& ranking =
          kind == DropKind::kAttention ? inputs.attention : inputs.frequency;
      Corpus dropped = DropTokens(test, {kind, k, inputs.seed}, ranking);
      std::string label = std::string(DropKindName(kind)) + " Drop";
      if (k == 2) label = "2 " + std::string(DropKindName(kind)) + " Drops";
      rows.push_back({label, Evaluate(params, EncodeAll(dropped, vocab, params.config.max_len))});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Heatmaps

enum class HeatmapFormat { kHtml, kAnsi };

inline HeatmapFormat ParseHeatmapFormat(std::string_view name) {
  if (name == "html") return HeatmapFormat::kHtml;
  if (name == "ansi") return HeatmapFormat::kAnsi;
  Fail(ErrorCode::kConfig, "unknown heatmap format '" + std::string(name) + "'");
}

// Attention rescaled so that the document maximum is 1.
inline std::vector<double> HeatmapIntensities(std::span<const double> alpha) {
  std::vector<double> out(alpha.begin(), alpha.end());
  const double peak = out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
  for (double& v : out) v = peak > 0.0 ? v / peak : 0.0;
  return out;
}

inline std::string HtmlEscape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// One line for one case; 'alpha' holds a weight per token.
inline std::string RenderHeatmap(std::span<const std::string> tokens,
                                 std::span<const double> alpha, HeatmapFormat format) {
  Require(tokens.size() == alpha.size(), ErrorCode::kInvalidShape,
          "heatmap: " + std::to_string(tokens.size()) + " tokens but " +
              std::to_string(alpha.size()) + " attention weights");
  const std::vector<double> level = HeatmapIntensities(alpha);
  std::string out;
  char buf[96];
  if (format == HeatmapFormat::kHtml) {
    out += "<p class=\"case\">";
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      std::snprintf(buf, sizeof buf,
                    "<span title=\"%.4f\" style=\"background-color: rgba(200, 30, 30, %.3f)\">",
                    alpha[i], level[i]);
      if (i > 0) out += ' ';
      out += buf;
      out += HtmlEscape(tokens[i]);
      out += "</span>";
    }
    out += "</p>";
  } else {
    // 24-step grayscale ramp, dark text on light cells.
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const int shade = 255 - static_cast<int>(std::lround(level[i] * 23.0));
      std::snprintf(buf, sizeof buf, "\x1b[48;5;%dm\x1b[38;5;%dm", shade, level[i] > 0.5 ? 15 : 0);
      if (i > 0) out += ' ';
      out += buf;
      out += tokens[i];
      out += "\x1b[0m";
    }
  }
  return out;
}

// Heatmap line of an encoded case from its width-1 attention.
inline std::string RenderCaseHeatmap(const EncodedCase& doc, const Vocabulary& vocab,
                                     const AttentionRecord& attention, HeatmapFormat format) {
  auto it = std::find(attention.widths.begin(), attention.widths.end(), std::size_t{1});
  Require(it != attention.widths.end(), ErrorCode::kConfig,
          "heatmaps need width-1 attention");
  const std::vector<double>& alpha = attention.alpha[it - attention.widths.begin()];
  const std::size_t n = std::min(doc.length, alpha.size());
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) tokens.push_back(vocab.Token(doc.ids[i]));
  return RenderHeatmap(std::span<const std::string>(tokens).first(n),
                       std::span<const double>(alpha).first(n), format);
}

inline std::string HtmlDocument(const std::vector<std::string>& lines) {
  std::string out =
      "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Attention</title></head>\n"
      "<body>\n";
  for (const std::string& line : lines) out += line + "\n";
  out += "</body>\n</html>\n";
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json ScoresToJson(std::span<const SymptomScore> scores) {
  nlohmann::json j = nlohmann::json::array();
  for (const SymptomScore& s : scores)
    j.push_back({{"feature", FeatureText(s.feature)},
                 {"class", ClassName(s.cls)},
                 {"score", s.score},
                 {"occurrences", s.occurrences},
                 {"mean_attention", s.mean_attention}});
  return j;
}

inline nlohmann::json PairsToJson(std::span<const PairSynergy> pairs) {
  nlohmann::json j = nlohmann::json::array();
  for (const PairSynergy& p : pairs)
    j.push_back({{"first", p.first},
                 {"second", p.second},
                 {"score_first", p.score_first},
                 {"score_second", p.score_second},
                 {"score_pair", p.score_pair},
                 {"margin", p.margin}});
  return j;
}

inline std::string RenderScoreTable(std::span<const SymptomScore> scores, std::size_t top) {
  std::size_t width = 7;
  const std::size_t n = std::min(top, scores.size());
  for (std::size_t i = 0; i < n; ++i) width = std::max(width, FeatureText(scores[i].feature).size());
  std::string out = "Symptom" + std::string(width - 7, ' ') + "  Score  Cases\n";
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    const std::string text = FeatureText(scores[i].feature);
    std::snprintf(buf, sizeof buf, "  %5.2f  %5zu\n", scores[i].score, scores[i].occurrences);
    out += text + std::string(width - text.size(), ' ') + buf;
  }
  return out;
}

inline std::string RenderPairTable(std::span<const PairSynergy> pairs) {
  std::size_t width = 6;
  for (const PairSynergy& p : pairs)
    width = std::max(width, std::max(p.first.size(), p.second.size()));
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  std::string out = pad("Symp 1") + "  " + pad("Symp 2") + "  S(1)  S(2)  S(1,2)  Margin\n";
  char buf[64];
  for (const PairSynergy& p : pairs) {
    std::snprintf(buf, sizeof buf, "  %4.2f  %4.2f  %6.2f  %6.2f\n", p.score_first,
                  p.score_second, p.score_pair, p.margin);
    out += pad(p.first) + "  " + pad(p.second) + buf;
  }
  return out;
}

}  // namespace acnn
