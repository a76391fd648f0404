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
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "acnn/corpus.hpp"
#include "acnn/error.hpp"
#include "acnn/model.hpp"

namespace acnn {

using Confusion = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;  // [true][predicted]

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::size_t predicted = 0;
  bool empty_support = false;  // recall reported as 0

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct Metrics {
  std::array<ClassMetrics, kNumClasses> per_class;
  Confusion confusion{};
  std::size_t evaluated = 0;  // cases before filtering
  std::size_t retained = 0;
  double retained_fraction = 1.0;

  double Accuracy() const {
    std::size_t hits = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) hits += confusion[c][c];
    return retained == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retained);
  }

  double MacroF1() const {
    double total = 0.0;
    for (const ClassMetrics& m : per_class) total += m.f1;
    return total / static_cast<double>(kNumClasses);
  }

  const ClassMetrics& operator[](TriageClass c) const { return per_class[ClassIndex(c)]; }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline double HarmonicMean(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

inline Metrics MetricsFromConfusion(const Confusion& confusion, std::size_t evaluated) {
  Metrics m;
  m.confusion = confusion;
  m.evaluated = evaluated;
  for (std::size_t t = 0; t < kNumClasses; ++t)
    for (std::size_t p = 0; p < kNumClasses; ++p) m.retained += confusion[t][p];
  m.retained_fraction =
      evaluated == 0 ? 0.0 : static_cast<double>(m.retained) / static_cast<double>(evaluated);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    ClassMetrics& cm = m.per_class[c];
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      cm.support += confusion[c][k];
      cm.predicted += confusion[k][c];
    }
    const double hits = static_cast<double>(confusion[c][c]);
    cm.precision = cm.predicted == 0 ? 0.0 : hits / static_cast<double>(cm.predicted);
    cm.empty_support = cm.support == 0;
    cm.recall = cm.empty_support ? 0.0 : hits / static_cast<double>(cm.support);
    cm.f1 = HarmonicMean(cm.precision, cm.recall);
  }
  return m;
}

inline std::vector<Prediction> Predict(const ModelParams& params,
                                       std::span<const EncodedCase> dataset) {
  std::vector<Prediction> out;
  out.reserve(dataset.size());
  for (const EncodedCase& doc : dataset) out.push_back(Forward(params, doc));
  return out;
}

// Metrics over cases whose confidence is at least 'threshold' (0 keeps all).
inline Metrics MetricsFromPredictions(std::span<const Prediction> predictions,
                                      std::span<const EncodedCase> dataset,
                                      double threshold = 0.0) {
  Require(predictions.size() == dataset.size(), ErrorCode::kInvalidShape,
          "prediction count does not match dataset");
  Confusion confusion{};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (predictions[i].confidence < threshold) continue;
    ++confusion[ClassIndex(dataset[i].label)][ClassIndex(predictions[i].predicted)];
  }
  return MetricsFromConfusion(confusion, dataset.size());
}

inline Metrics Evaluate(const ModelParams& params, std::span<const EncodedCase> dataset) {
  Require(!dataset.empty(), ErrorCode::kInvalidShape, "cannot evaluate an empty dataset");
  return MetricsFromPredictions(Predict(params, dataset), dataset);
}

struct FilterResult {
  Metrics metrics;  // on retained cases
  double threshold = 0.0;
  double discard_fraction = 0.0;
  std::vector<std::size_t> retained;  // dataset indices
};

inline void RequireThreshold(double threshold) {
  Require(threshold >= 1.0 / 3.0 && threshold < 1.0, ErrorCode::kConfig,
          "confidence threshold must lie in [1/3, 1), got " + std::to_string(threshold));
}

inline FilterResult ConfidenceFilter(std::span<const Prediction> predictions,
                                     std::span<const EncodedCase> dataset, double threshold) {
  RequireThreshold(threshold);
  FilterResult r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].confidence >= threshold) r.retained.push_back(i);
  Require(!r.retained.empty(), ErrorCode::kEmptyRetained,
          "every case falls below confidence " + std::to_string(threshold));
  r.metrics = MetricsFromPredictions(predictions, dataset, threshold);
  r.discard_fraction = 1.0 - r.metrics.retained_fraction;
  return r;
}

inline FilterResult ConfidenceFilter(const ModelParams& params,
                                     std::span<const EncodedCase> dataset,
                                     double threshold = 0.6) {
  RequireThreshold(threshold);
  return ConfidenceFilter(Predict(params, dataset), dataset, threshold);
}

inline nlohmann::json MetricsToJson(const Metrics& m) {
  nlohmann::json j;
  j["evaluated"] = m.evaluated;
  j["retained"] = m.retained;
  j["retained_fraction"] = m.retained_fraction;
  j["accuracy"] = m.Accuracy();
  j["macro_f1"] = m.MacroF1();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ClassMetrics& cm = m.per_class[c];
    nlohmann::json row = {{"precision", cm.precision}, {"recall", cm.recall}, {"f1", cm.f1},
                          {"support", cm.support},     {"predicted", cm.predicted}};
    if (cm.empty_support) row["empty_support"] = true;
    j["classes"][std::string(ClassName(kAllClasses[c]))] = row;
    j["confusion"].push_back(m.confusion[c]);
  }
  return j;
}

// Plain-text table: one row per labelled Metrics, precision/recall/F per
// class in percent. With 'show_retained', a discard column is appended.
inline std::string RenderMetricsTable(
    const std::vector<std::pair<std::string, Metrics>>& rows, bool show_retained = false) {
  std::size_t label_width = 5;
  for (const auto& [label, m] : rows) label_width = std::max(label_width, label.size());
  std::string out;
  char buf[64];
  auto pad = [&](const std::string& s) { return s + std::string(label_width - s.size(), ' '); };
  out += pad("Model");
  for (std::size_t c = 1; c <= kNumClasses; ++c) {
    for (const char* col : {"P", "R", "F"}) {
      std::snprintf(buf, sizeof buf, " %7s", (std::string(col) + "(s" + std::to_string(c) + ")").c_str());
      out += buf;
    }
  }
  if (show_retained) out += " Discard";
  out += '\n';
  for (const auto& [label, m] : rows) {
    out += pad(label);
    for (const ClassMetrics& cm : m.per_class) {
      for (double v : {cm.precision, cm.recall, cm.f1}) {
        std::snprintf(buf, sizeof buf, " %7.1f", 100.0 * v);
        out += buf;
      }
    }
    if (show_retained) {
      std::snprintf(buf, sizeof buf, " %6.1f%%", 100.0 * (1.0 - m.retained_fraction));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace acnn
