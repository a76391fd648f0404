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
#include "acnn/run_config.hpp"

#include <gtest/gtest.h>

namespace acnn {
namespace {

TEST(RunConfig, MergeOverridesOnlyGivenValues) {
  RunConfig c;
  MergeRunConfig(nlohmann::json::parse(R"({"seed": 3, "model": {"filters": 8},
                                            "generator": {"mode": "fulltext"}})"),
                 c);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.filters, 8u);
  EXPECT_EQ(c.model.attention, DeskModelConfig().attention);
  EXPECT_EQ(c.generator.mode, DatasetMode::kFulltext);
  EXPECT_EQ(c.hyper.learning_rate, 0.001);
}

TEST(RunConfig, UnknownKeysRejected) {
  for (const char* text : {R"({"sed": 1})", R"({"model": {"filter": 3}})",
                           R"({"hyper": {"lr": 0.1}})", R"({"generator": {"size": 3}})"}) {
    RunConfig c;
    try {
      MergeRunConfig(nlohmann::json::parse(text), c);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  }
}

TEST(RunConfig, SeedsDeriveFromRootAndCanBePinned) {
  RunConfig a, b;
  b.seed = a.seed + 1;
  EXPECT_NE(a.Seeds().data, b.Seeds().data);
  EXPECT_NE(a.Seeds().data, a.Seeds().init);
  MergeRunConfig(nlohmann::json::parse(R"({"seeds": {"data": 99}})"), b);
  EXPECT_EQ(b.Seeds().data, 99u);
  EXPECT_NE(b.Seeds().init, a.Seeds().init);
  b.seed_overrides["bogus"] = 1;
  EXPECT_THROW(b.Validate(), Error);
}

TEST(RunConfig, EchoedConfigReproducesItself) {
  RunConfig c;
  c.seed = 12;
  c.model.hidden = {10};
  c.hyper.epochs = 2;
  const nlohmann::json echoed = c;
  RunConfig back;
  MergeRunConfig(echoed, back);
  EXPECT_EQ(nlohmann::json(back), echoed);
  EXPECT_EQ(ResolveHyper(back).seed, ResolveHyper(c).seed);
}

TEST(RunConfig, PrepareIsDeterministic) {
  RunConfig c;
  const Corpus corpus = GenerateCorpus(c.generator, 400, c.Seeds().data);
  const PreparedData a = Prepare(corpus, c);
  const PreparedData b = Prepare(corpus, c);
  EXPECT_EQ(a.vocab.tokens(), b.vocab.tokens());
  EXPECT_EQ(a.split.test.records, b.split.test.records);
  EXPECT_EQ(a.split.train.size() + a.split.validation.size() + a.split.test.size(), 400u);
  EXPECT_EQ(ResolveModel(c, a.vocab, Architecture::kKimCnn).vocab_size, a.vocab.size());
}

}  // namespace
}  // namespace acnn
