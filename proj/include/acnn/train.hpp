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
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "acnn/autodiff.hpp"
#include "acnn/corpus.hpp"
#include "acnn/error.hpp"
#include "acnn/hash.hpp"
#include "acnn/metrics.hpp"
#include "acnn/model.hpp"
#include "acnn/random.hpp"

namespace acnn {

struct HyperParams {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool freeze_embedding = false;
  std::uint64_t seed = 1;

  // A zero learning rate is accepted so that a run can be replayed without
  // moving the parameters.
  void Validate() const {
    auto fail = [](const std::string& what) { Fail(ErrorCode::kConfig, what); };
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      fail("learning_rate must be a nonnegative number");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (epochs < 1) fail("epochs must be at least 1");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      fail("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
  }

  std::uint64_t Hash() const {
    Fnv1a h;
    h.Update(std::string_view("hyper-v1"));
    for (double v : {learning_rate, weight_decay, beta1, beta2, epsilon}) h.Update(v);
    for (std::uint64_t v : {std::uint64_t{batch_size}, std::uint64_t{epochs},
                            std::uint64_t{freeze_embedding}, seed})
      h.Update(v);
    return h.Digest();
  }
};

inline void to_json(nlohmann::json& j, const HyperParams& h) {
  j = {{"learning_rate", h.learning_rate}, {"batch_size", h.batch_size},
       {"epochs", h.epochs},               {"weight_decay", h.weight_decay},
       {"beta1", h.beta1},                 {"beta2", h.beta2},
       {"epsilon", h.epsilon},             {"freeze_embedding", h.freeze_embedding},
       {"seed", h.seed}};
}

inline void from_json(const nlohmann::json& j, HyperParams& h) {
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.weight_decay = j.value("weight_decay", h.weight_decay);
  h.beta1 = j.value("beta1", h.beta1);
  h.beta2 = j.value("beta2", h.beta2);
  h.epsilon = j.value("epsilon", h.epsilon);
  h.freeze_embedding = j.value("freeze_embedding", h.freeze_embedding);
  h.seed = j.value("seed", h.seed);
}

// Flat index range [begin, end) of one tensor that the optimizer skips.
struct FrozenRange {
  std::size_t tensor = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState For(std::span<const Tensor* const> params) {
    AdamState s;
    for (const Tensor* t : params) {
      s.m.emplace_back(t->size(), 0.0);
      s.v.emplace_back(t->size(), 0.0);
    }
    return s;
  }
};

// One Adam update with bias correction. Weight decay is decoupled: lr * λ * θ
// is subtracted at the update and never enters the moment estimates.
inline void AdamStep(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                     AdamState& state, const HyperParams& hyper,
                     std::span<const FrozenRange> frozen = {}) {
  Require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorCode::kInvalidShape, "adam: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    Require(params[i]->shape() == grads[i]->shape() && state.m[i].size() == params[i]->size() &&
                state.v[i].size() == params[i]->size(),
            ErrorCode::kInvalidShape,
            "adam: shape mismatch at tensor " + std::to_string(i) + " " +
                ShapeString(params[i]->shape()) + " vs " + ShapeString(grads[i]->shape()));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> theta = params[i]->data();
    std::span<const double> g = grads[i]->data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    auto update = [&](std::size_t begin, std::size_t end) {
      for (std::size_t j = begin; j < end; ++j) {
        m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
        v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
        const double step = (m[j] / c1) / (std::sqrt(v[j] / c2) + hyper.epsilon);
        theta[j] -= hyper.learning_rate * (step + hyper.weight_decay * theta[j]);
      }
    };
    std::size_t cursor = 0;
    for (const FrozenRange& f : frozen) {
      if (f.tensor != i) continue;
      update(cursor, std::max(cursor, f.begin));
      cursor = std::max(cursor, f.end);
    }
    update(cursor, theta.size());
  }
}

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> validation_macro_f1;
  std::uint64_t steps = 0;
};

inline nlohmann::json HistoryToJson(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},
          {"validation_loss", h.validation_loss},
          {"validation_macro_f1", h.validation_macro_f1},
          {"steps", h.steps}};
}

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

// Optional per-epoch observer: (epoch index, history so far).
using EpochCallback = std::function<void(std::size_t, const TrainHistory&)>;

inline double MeanLoss(const ModelParams& params, std::span<const EncodedCase> dataset) {
  double total = 0.0;
  for (const EncodedCase& doc : dataset)
    total += CrossEntropy(Forward(params, doc).probabilities, ClassIndex(doc.label));
  return total / static_cast<double>(dataset.size());
}

// Frozen parameter ranges for a model: the padding row of the embedding, or
// the whole table when the embedding is frozen.
inline std::vector<FrozenRange> FrozenRanges(const ModelParams& params, bool freeze_embedding) {
  const std::size_t k = params.embedding.dim(1);
  return {FrozenRange{0, Vocabulary::kPadding * k,
                      freeze_embedding ? params.embedding.size() : (Vocabulary::kPadding + 1) * k}};
}

// Minibatch Adam on the mean cross-entropy of each batch. Each epoch visits
// the training cases in a seeded permutation; dropout masks come from a
// generator derived from the seed and the global step.
inline TrainResult Train(ModelParams params, std::span<const EncodedCase> train_set,
                         std::span<const EncodedCase> validation_set, const HyperParams& hyper,
                         const EpochCallback& on_epoch = {}) {
  hyper.Validate();
  params.config.Validate();
  Require(!train_set.empty(), ErrorCode::kInvalidShape, "training set is empty");
  Require(!validation_set.empty(), ErrorCode::kInvalidShape, "validation set is empty");

  ModelParams grads = ZeroParams(params.config);
  std::vector<Tensor*> values = params.Tensors();
  std::vector<Tensor*> grad_tensors = grads.Tensors();
  std::vector<const Tensor*> grad_view(grad_tensors.begin(), grad_tensors.end());
  AdamState state = AdamState::For(std::vector<const Tensor*>(values.begin(), values.end()));
  const std::vector<FrozenRange> frozen = FrozenRanges(params, hyper.freeze_embedding);

  TrainHistory history;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(DeriveSeed(hyper.seed, "shuffle", epoch));
    shuffle.Shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += hyper.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (Tensor* g : grad_tensors) g->Fill(0.0);
      Rng dropout(DeriveSeed(hyper.seed, "dropout", history.steps));
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Tape tape;
        std::vector<Var> leaves = ParameterLeaves(tape, params, grads);
        Var loss = Scale(CaseLoss(params.config, leaves, train_set[order[i]],
                                  {&dropout, params.config.dropout}),
                         scale);
        batch_loss += loss.value().item();
        Backward(loss);
      }
      if (!std::isfinite(batch_loss))
        Fail(ErrorCode::kDiverged, "non-finite training loss at epoch " +
                                       std::to_string(epoch + 1) + ", step " +
                                       std::to_string(batch + 1));
      AdamStep(values, grad_view, state, hyper, frozen);
      ++history.steps;
      epoch_loss += batch_loss * static_cast<double>(end - start);
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));
    const std::vector<Prediction> predictions = Predict(params, validation_set);
    double val_loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
      val_loss += CrossEntropy(predictions[i].probabilities, ClassIndex(validation_set[i].label));
    history.validation_loss.push_back(val_loss / static_cast<double>(validation_set.size()));
    history.validation_macro_f1.push_back(
        MetricsFromPredictions(predictions, validation_set).MacroF1());
    if (on_epoch) on_epoch(epoch, history);
  }
  return {std::move(params), std::move(history)};
}

// Exhaustive sweep; every combination is trained from the same initial
// parameters (re-initialized per dropout value) and ranked by the final
// validation macro-F1. Ties keep the earliest combination.
struct GridSpec {
  std::vector<double> learning_rates = {0.001, 0.002, 0.003};
  std::vector<std::size_t> batch_sizes = {64};
  std::vector<double> weight_decays = {1e-4};
  std::vector<double> dropouts = {0.5, 0.8};

  void Validate() const {
    Require(!learning_rates.empty() && !batch_sizes.empty() && !weight_decays.empty() &&
                !dropouts.empty(),
            ErrorCode::kConfig, "every grid axis needs at least one value");
  }
};

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"learning_rates", g.learning_rates},
       {"batch_sizes", g.batch_sizes},
       {"weight_decays", g.weight_decays},
       {"dropouts", g.dropouts}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
  g.learning_rates = j.value("learning_rates", g.learning_rates);
  g.batch_sizes = j.value("batch_sizes", g.batch_sizes);
  g.weight_decays = j.value("weight_decays", g.weight_decays);
  g.dropouts = j.value("dropouts", g.dropouts);
}

struct GridPoint {
  HyperParams hyper;
  double dropout = 0.0;
  double validation_macro_f1 = 0.0;
  double validation_loss = 0.0;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
};

inline GridResult GridSearch(const ModelParams& initial, std::span<const EncodedCase> train_set,
                             std::span<const EncodedCase> validation_set, const HyperParams& base,
                             const GridSpec& grid) {
  grid.Validate();
  GridResult result;
  for (double dropout : grid.dropouts)
    for (double lr : grid.learning_rates)
      for (std::size_t batch : grid.batch_sizes)
        for (double decay : grid.weight_decays) {
          HyperParams h = base;
          h.learning_rate = lr;
          h.batch_size = batch;
          h.weight_decay = decay;
          ModelParams start = initial;
          start.config.dropout = dropout;
          TrainResult r = Train(std::move(start), train_set, validation_set, h);
          result.points.push_back({h, dropout, r.history.validation_macro_f1.back(),
                                   r.history.validation_loss.back()});
          if (result.points.back().validation_macro_f1 >
              result.points[result.best].validation_macro_f1)
            result.best = result.points.size() - 1;
        }
  return result;
}

inline nlohmann::json GridToJson(const GridResult& g) {
  nlohmann::json j;
  for (const GridPoint& p : g.points)
    j["points"].push_back({{"hyper", p.hyper},
                           {"dropout", p.dropout},
                           {"validation_macro_f1", p.validation_macro_f1},
                           {"validation_loss", p.validation_loss}});
  j["best"] = g.best;
  return j;
}

}  // namespace acnn
