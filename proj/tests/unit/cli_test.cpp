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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

#include "acnn/binary_io.hpp"

namespace fs = std::filesystem;

namespace acnn {
namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("acnn-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int Run(const std::string& args, const fs::path& out) const {
    const std::string cmd = std::string(ACNN_TRIAGE_BIN) + " --out '" + out.string() + "' " + args +
                            " > '" + (dir_ / "log.txt").string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  int Run(const std::string& args) const { return Run(args, dir_); }

  std::string Log() const { return ReadFileBytes((dir_ / "log.txt").string()); }

  fs::path dir_;
};

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(Run("gen-data --no-such-flag"), 2);
  EXPECT_EQ(Run("no-such-command"), 2);
  EXPECT_EQ(Run(""), 2);
}

TEST_F(CliTest, ValidationErrorsExitOne) {
  EXPECT_EQ(Run("gen-data --size 3"), 1);
  EXPECT_EQ(Run("gen-data --mode poetry"), 1);
  EXPECT_EQ(Run("evaluate --model missing.bin"), 1);
  ASSERT_EQ(Run("gen-data --size 200"), 0);
  EXPECT_EQ(Run("train --arch transformer"), 1);
  EXPECT_EQ(Run("score-symptoms --gram 3"), 1);
  EXPECT_EQ(Run("drop-experiment --drops 3"), 1);
  EXPECT_EQ(Run("evaluate --confidence-threshold 0.1"), 1);
  std::ofstream(dir_ / "bad.json") << "{\"modle\": {}}";
  EXPECT_EQ(Run("--config '" + (dir_ / "bad.json").string() + "' gen-data"), 1);
  EXPECT_NE(Log().find("modle"), std::string::npos);
}

TEST_F(CliTest, GenDataIsByteIdentical) {
  ASSERT_EQ(Run("gen-data --seed 7 --size 300", dir_ / "a"), 0);
  ASSERT_EQ(Run("gen-data --seed 7 --size 300", dir_ / "b"), 0);
  ASSERT_EQ(Run("gen-data --seed 8 --size 300", dir_ / "c"), 0);
  const std::string a = ReadFileBytes((dir_ / "a" / "corpus.jsonl").string());
  EXPECT_EQ(a, ReadFileBytes((dir_ / "b" / "corpus.jsonl").string()));
  EXPECT_NE(a, ReadFileBytes((dir_ / "c" / "corpus.jsonl").string()));

  const auto manifest =
      nlohmann::json::parse(ReadFileBytes((dir_ / "a" / "manifest-gen-data.json").string()));
  EXPECT_EQ(manifest["subcommand"], "gen-data");
  EXPECT_EQ(manifest["config"]["seed"], 7);
  EXPECT_EQ(manifest["config"]["corpus_size"], 300);
  EXPECT_TRUE(manifest["config"]["seeds"].contains("data"));
  EXPECT_EQ(manifest["outputs"].size(), 1u);
  EXPECT_TRUE(manifest.contains("version"));
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  const fs::path env_dir = dir_ / "from-env";
  const std::string cmd = "ACNN_OUTPUT_DIR='" + env_dir.string() + "' " + ACNN_TRIAGE_BIN +
                          " gen-data --size 100 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(env_dir / "corpus.jsonl"));
}

TEST_F(CliTest, PipelineReportsDiscardFractionAndDropRows) {
  ASSERT_EQ(Run("gen-data --size 600"), 0);
  ASSERT_EQ(Run("train --arch acnn --epochs 5 --lr 0.003"), 0);
  ASSERT_EQ(Run("evaluate --confidence-threshold 0.6"), 0);
  const auto report =
      nlohmann::json::parse(ReadFileBytes((dir_ / "metrics-model-acnn.json").string()));
  EXPECT_TRUE(report.contains("discard_fraction"));
  EXPECT_TRUE(report.contains("filtered"));

  ASSERT_EQ(Run("drop-experiment --drops 2"), 0);
  const auto rows = nlohmann::json::parse(ReadFileBytes((dir_ / "drop-2.json").string()));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0]["row"], "Baseline");
  EXPECT_EQ(rows[6]["row"], "2 Attention Drops");

  ASSERT_EQ(Run("explain --cases 0,1 --format html"), 0);
  const std::string html = ReadFileBytes((dir_ / "heatmap.html").string());
  EXPECT_NE(html.find("<span"), std::string::npos);
  EXPECT_EQ(Run("explain --cases 100000"), 1);
}

}  // namespace
}  // namespace acnn
