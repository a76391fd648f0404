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
#include "acnn/train.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace acnn {
namespace {

template <typename Fn>
void ExpectError(ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << ErrorCodeName(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

HyperParams NoDecay(double lr) {
  HyperParams h;
  h.learning_rate = lr;
  h.weight_decay = 0.0;
  return h;
}

void Step(Tensor& theta, const Tensor& grad, AdamState& state, const HyperParams& h,
          std::span<const FrozenRange> frozen = {}) {
  std::vector<Tensor*> p = {&theta};
  std::vector<const Tensor*> g = {&grad};
  AdamStep(p, g, state, h, frozen);
}

TEST(AdamStep, ZeroGradientLeavesParamsUnchanged) {
  Tensor theta = Tensor::Vector({0.3, -1.2, 4.0});
  const Tensor before = theta;
  AdamState state = AdamState::For(std::vector<const Tensor*>{&theta});
  Step(theta, Tensor({3}), state, NoDecay(0.01));
  EXPECT_TRUE(theta == before);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  Tensor theta = Tensor::Vector({1.0, 1.0});
  AdamState state = AdamState::For(std::vector<const Tensor*>{&theta});
  Step(theta, Tensor::Vector({3.0, -0.5}), state, NoDecay(0.1));
  // Bias-corrected moments give m_hat / sqrt(v_hat) = sign(g).
  EXPECT_NEAR(theta[0], 0.9, 1e-8);
  EXPECT_NEAR(theta[1], 1.1, 1e-8);
}

TEST(AdamStep, QuadraticConverges) {
  // Reference: a plain scalar transcription of the update rule.
  double ref = 1.0, m = 0.0, v = 0.0;
  Tensor theta = Tensor::Vector({1.0});
  AdamState state = AdamState::For(std::vector<const Tensor*>{&theta});
  const HyperParams h = NoDecay(0.1);
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    Step(theta, Tensor::Vector({2.0 * theta[0]}), state, h);
  }
  EXPECT_NEAR(theta[0], ref, 1e-12);
  EXPECT_LT(std::abs(theta[0]), 0.05);
}

TEST(AdamStep, DecoupledWeightDecay) {
  Tensor theta = Tensor::Vector({1.0, -2.0});
  AdamState state = AdamState::For(std::vector<const Tensor*>{&theta});
  HyperParams h;
  h.learning_rate = 0.1;
  h.weight_decay = 0.1;
  Step(theta, Tensor({2}), state, h);
  EXPECT_DOUBLE_EQ(theta[0], 0.99);
  EXPECT_DOUBLE_EQ(theta[1], -1.98);
  for (double x : state.m[0]) EXPECT_EQ(x, 0.0);
}

TEST(AdamStep, FrozenRangeUntouched) {
  Tensor table = Tensor::Matrix(3, 2, {0, 0, 1, 1, 2, 2});
  AdamState state = AdamState::For(std::vector<const Tensor*>{&table});
  const std::vector<FrozenRange> frozen = {{0, 0, 2}};
  Step(table, Tensor::Matrix(3, 2, {5, 5, 5, 5, 5, 5}), state, NoDecay(0.1), frozen);
  EXPECT_EQ(table.at(0, 0), 0.0);
  EXPECT_EQ(table.at(0, 1), 0.0);
  EXPECT_NE(table.at(1, 0), 1.0);
}

TEST(AdamStep, ShapeMismatch) {
  Tensor theta = Tensor::Vector({1.0, 2.0});
  AdamState state = AdamState::For(std::vector<const Tensor*>{&theta});
  ExpectError(ErrorCode::kInvalidShape, [&] { Step(theta, Tensor({3}), state, NoDecay(0.1)); });
}

TEST(AdamStep, Deterministic) {
  Tensor a = Tensor::Vector({0.5, -0.25}), b = a;
  AdamState sa = AdamState::For(std::vector<const Tensor*>{&a});
  AdamState sb = AdamState::For(std::vector<const Tensor*>{&b});
  for (int i = 0; i < 10; ++i) {
    Step(a, Tensor::Vector({a[0] - a[1], a[1] * 3.0}), sa, HyperParams{});
    Step(b, Tensor::Vector({b[0] - b[1], b[1] * 3.0}), sb, HyperParams{});
  }
  EXPECT_TRUE(a == b);
}

struct SmallTask {
  ModelConfig config;
  std::vector<EncodedCase> train, validation;
};

SmallTask MakeTask(std::uint64_t seed, std::size_t n = 300) {
  Corpus corpus = GenerateCorpus(GeneratorSpec{}, n, seed);
  DatasetSplit split = SplitCorpus(corpus, {0.8, 0.1, 0.1}, seed);
  Vocabulary vocab = BuildVocab(split.train, 1, {});
  SmallTask task;
  task.config.windows = {1, 2};
  task.config.filters = 6;
  task.config.attention = 6;
  task.config.hidden = {12};
  task.config.dropout = 0.2;
  task.config.max_len = 14;
  task.config.embedding_dim = 8;
  task.config.vocab_size = vocab.size();
  task.train = EncodeAll(split.train, vocab, task.config.max_len);
  task.validation = EncodeAll(split.validation, vocab, task.config.max_len);
  return task;
}

TEST(Train, ZeroLearningRateKeepsParams) {
  SmallTask task = MakeTask(1, 120);
  ModelParams init = InitParams(task.config, 2);
  HyperParams h;
  h.learning_rate = 0.0;
  h.epochs = 1;
  TrainResult r = Train(init, task.train, task.validation, h);
  EXPECT_TRUE(r.params == init);
  EXPECT_EQ(r.history.train_loss.size(), 1u);
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  SmallTask task = MakeTask(3, 150);
  HyperParams h;
  h.epochs = 2;
  h.batch_size = 16;
  h.learning_rate = 0.003;
  TrainResult a = Train(InitParams(task.config, 4), task.train, task.validation, h);
  TrainResult b = Train(InitParams(task.config, 4), task.train, task.validation, h);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
  EXPECT_EQ(a.history.steps, 2u * ((task.train.size() + 15) / 16));
}

TEST(Train, LossDecreasesAndPaddingRowStaysZero) {
  SmallTask task = MakeTask(5);
  HyperParams h;
  h.epochs = 5;
  h.batch_size = 16;
  h.learning_rate = 0.003;
  TrainResult r = Train(InitParams(task.config, 6), task.train, task.validation, h);
  ASSERT_EQ(r.history.train_loss.size(), 5u);
  ASSERT_EQ(r.history.validation_macro_f1.size(), 5u);
  EXPECT_LT(r.history.train_loss.back(), r.history.train_loss.front());
  for (double v : r.params.embedding.row(Vocabulary::kPadding)) EXPECT_EQ(v, 0.0);
}

TEST(Train, FrozenEmbeddingStaysFixed) {
  SmallTask task = MakeTask(7, 120);
  ModelParams init = InitParams(task.config, 8);
  HyperParams h;
  h.epochs = 1;
  h.freeze_embedding = true;
  TrainResult r = Train(init, task.train, task.validation, h);
  EXPECT_TRUE(r.params.embedding == init.embedding);
  EXPECT_FALSE(r.params.layers.back().weight == init.layers.back().weight);
}

TEST(Train, NonFiniteLossIsDivergence) {
  SmallTask task = MakeTask(9, 120);
  ModelParams init = InitParams(task.config, 1);
  init.layers.back().bias[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    Train(init, task.train, task.validation, HyperParams{});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDiverged);
    EXPECT_NE(std::string(e.what()).find("epoch 1, step 1"), std::string::npos);
  }
}

TEST(Train, InvalidHyperParams) {
  SmallTask task = MakeTask(1, 120);
  HyperParams h;
  h.batch_size = 0;
  ExpectError(ErrorCode::kConfig,
              [&] { Train(InitParams(task.config, 1), task.train, task.validation, h); });
}

Confusion MakeConfusion(std::array<std::array<std::size_t, 3>, 3> rows) { return rows; }

TEST(Metrics, PerfectPredictions) {
  Metrics m = MetricsFromConfusion(MakeConfusion({{{4, 0, 0}, {0, 2, 0}, {0, 0, 3}}}), 9);
  for (const ClassMetrics& c : m.per_class) {
    EXPECT_EQ(c.precision, 1.0);
    EXPECT_EQ(c.recall, 1.0);
    EXPECT_EQ(c.f1, 1.0);
  }
  EXPECT_EQ(m.Accuracy(), 1.0);
  EXPECT_EQ(m.retained_fraction, 1.0);
}

TEST(Metrics, HandComputedConfusion) {
  Metrics m = MetricsFromConfusion(MakeConfusion({{{5, 0, 0}, {0, 0, 5}, {0, 0, 5}}}), 15);
  const ClassMetrics& tele = m[TriageClass::kTelecare];
  EXPECT_DOUBLE_EQ(tele.precision, 0.5);
  EXPECT_DOUBLE_EQ(tele.recall, 1.0);
  EXPECT_DOUBLE_EQ(tele.f1, 2.0 / 3.0);
  const ClassMetrics& gp = m[TriageClass::kGeneralPractice];
  EXPECT_EQ(gp.precision, 0.0);
  EXPECT_EQ(gp.recall, 0.0);
  EXPECT_EQ(gp.f1, 0.0);
  EXPECT_EQ(gp.support, 5u);
  EXPECT_DOUBLE_EQ(m.Accuracy(), 10.0 / 15.0);
}

TEST(Metrics, EmptySupportFlagged) {
  Metrics m = MetricsFromConfusion(MakeConfusion({{{3, 1, 0}, {0, 0, 0}, {0, 0, 2}}}), 6);
  EXPECT_TRUE(m[TriageClass::kGeneralPractice].empty_support);
  EXPECT_EQ(m[TriageClass::kGeneralPractice].recall, 0.0);
  EXPECT_FALSE(m[TriageClass::kUrgentCare].empty_support);
  EXPECT_TRUE(MetricsToJson(m)["classes"]["GeneralPractice"].value("empty_support", false));
}

TEST(Metrics, IdentitiesOnRandomConfusions) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Confusion c{};
    std::size_t n = 0;
    for (auto& row : c)
      for (auto& x : row) n += (x = rng.Below(7));
    if (n == 0) continue;
    Metrics m = MetricsFromConfusion(c, n);
    std::size_t trace = c[0][0] + c[1][1] + c[2][2];
    EXPECT_DOUBLE_EQ(m.Accuracy(), static_cast<double>(trace) / static_cast<double>(n));
    for (std::size_t k = 0; k < 3; ++k) {
      const ClassMetrics& cm = m.per_class[k];
      EXPECT_EQ(cm.support, c[k][0] + c[k][1] + c[k][2]);
      EXPECT_GE(cm.precision, 0.0);
      EXPECT_LE(cm.precision, 1.0);
      EXPECT_GE(cm.recall, 0.0);
      EXPECT_LE(cm.recall, 1.0);
      const double p = cm.precision, r = cm.recall;
      EXPECT_DOUBLE_EQ(cm.f1, p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r));
    }
  }
}

std::vector<Prediction> FakePredictions(const std::vector<EncodedCase>& data, Rng& rng) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::array<double, 3> logits = {rng.Uniform(-2, 2), rng.Uniform(-2, 2), rng.Uniform(-2, 2)};
    std::vector<double> probs = Softmax(logits);
    Prediction p;
    std::size_t best = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      p.probabilities[c] = probs[c];
      if (probs[c] > probs[best]) best = c;
    }
    p.predicted = kAllClasses[best];
    p.confidence = probs[best];
    out.push_back(p);
  }
  return out;
}

TEST(ConfidenceFilter, NestingAndBounds) {
  std::vector<EncodedCase> data(400);
  Rng rng(3);
  for (auto& d : data) d.label = kAllClasses[rng.Below(3)];
  const auto preds = FakePredictions(data, rng);

  FilterResult all = ConfidenceFilter(preds, data, 1.0 / 3.0);
  EXPECT_EQ(all.retained.size(), data.size());
  EXPECT_EQ(all.discard_fraction, 0.0);

  std::vector<std::size_t> previous = all.retained;
  double previous_discard = 0.0;
  for (double t = 0.35; t < 0.8; t += 0.05) {
    FilterResult r = ConfidenceFilter(preds, data, t);
    EXPECT_TRUE(std::includes(previous.begin(), previous.end(), r.retained.begin(), r.retained.end()));
    EXPECT_GE(r.discard_fraction, previous_discard);
    EXPECT_EQ(r.metrics.retained, r.retained.size());
    previous = r.retained;
    previous_discard = r.discard_fraction;
  }
  ExpectError(ErrorCode::kConfig, [&] { ConfidenceFilter(preds, data, 0.2); });
  ExpectError(ErrorCode::kConfig, [&] { ConfidenceFilter(preds, data, 1.0); });
  ExpectError(ErrorCode::kEmptyRetained, [&] { ConfidenceFilter(preds, data, 0.999); });
}

TEST(Metrics, TableLayout) {
  Metrics m = MetricsFromConfusion(MakeConfusion({{{5, 0, 0}, {0, 0, 5}, {0, 0, 5}}}), 20);
  const std::string table = RenderMetricsTable({{"ACNN", m}}, true);
  EXPECT_NE(table.find("P(s1)"), std::string::npos);
  EXPECT_NE(table.find("F(s3)"), std::string::npos);
  EXPECT_NE(table.find("66.7"), std::string::npos);
  EXPECT_NE(table.find("25.0%"), std::string::npos);
}

}  // namespace
}  // namespace acnn
