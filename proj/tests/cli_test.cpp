// Copyright 2026 The dogrpo Authors
// SPDX-License-Identifier: Apache-2.0
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
#include <sstream>

#include <gtest/gtest.h>

#include "dogrpo/checkpoint.hpp"
#include "dogrpo/scene.hpp"

#ifndef DOGRPO_CLI_PATH
#error "DOGRPO_CLI_PATH must name the command-line binary"
#endif

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dogrpo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(DOGRPO_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

TEST_F(Cli, UnknownSubcommandIsAUsageError) {
  const Result r = run("frobnicate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE((r.out + r.err).find("train"), std::string::npos) << "usage text lists subcommands";
}

TEST_F(Cli, MissingRequiredOptionIsAUsageError) {
  EXPECT_EQ(run("eval").code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST_F(Cli, MissingConfigFileIsARuntimeError) {
  const Result r = run("train --config " + (dir_ / "absent.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.json"), std::string::npos);
}

TEST_F(Cli, SampleFromOracleCheckpoint) {
  const fs::path ck = dir_ / "oracle.json";
  ASSERT_EQ(run("oracle --out " + ck.string()).code, 0);
  const fs::path img = dir_ / "sample.ppm";
  const Result r = run("sample --checkpoint " + ck.string() + " --prompt \"a red circle\" --seed 3 --out " +
                       img.string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("<thought> red circle </thought> <description> a red circle </description>"),
            std::string::npos)
      << r.out;
  EXPECT_EQ(slurp(img).rfind("P3\n96 96\n255\n", 0), 0u);
}

TEST_F(Cli, SampleRejectsMalformedPrompt) {
  const fs::path ck = dir_ / "oracle.json";
  ASSERT_EQ(run("oracle --out " + ck.string()).code, 0);
  EXPECT_EQ(run("sample --checkpoint " + ck.string() + " --prompt \"circle red a\"").code, 1);
}

TEST_F(Cli, EvalOnCorruptCheckpointFails) {
  const fs::path ck = dir_ / "bad.json";
  std::ofstream(ck) << "{\"format\": \"dogrpo-checkpoint\"";
  const Result r = run("eval --checkpoint " + ck.string() + " --n 2 --seed 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, EvalPrintsReport) {
  const fs::path ck = dir_ / "oracle.json";
  ASSERT_EQ(run("oracle --out " + ck.string()).code, 0);
  const Result r = run("eval --checkpoint " + ck.string() + " --n 3 --seed 4");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("prompts"), 9);
  EXPECT_EQ(j.at("vqa_rate"), 1.0);
}

TEST_F(Cli, RenderTokenFile) {
  const fs::path tokens = dir_ / "tokens.txt";
  {
    std::ofstream out(tokens);
    out << "img:red-circle";
    for (int i = 1; i < 36; ++i) out << (i % 6 ? ' ' : '\n') << "img:empty";
  }
  const fs::path img = dir_ / "r.ppm";
  EXPECT_EQ(run("render --tokens " + tokens.string() + " --out " + img.string()).code, 0);
  EXPECT_TRUE(fs::exists(img));
  std::ofstream(tokens) << "img:red-circle img:empty";
  EXPECT_EQ(run("render --tokens " + tokens.string() + " --out " + img.string()).code, 1);
}

TEST_F(Cli, CorpusRoundTrips) {
  const fs::path out = dir_ / "corpus.jsonl";
  ASSERT_EQ(run("corpus --n 25 --seed 9 --out " + out.string()).code, 0);
  EXPECT_EQ(dogrpo::read_corpus(out.string()).size(), 25u);
  const std::string first = slurp(out);
  ASSERT_EQ(run("corpus --n 25 --seed 9 --out " + out.string()).code, 0);
  EXPECT_EQ(slurp(out), first);
}

TEST_F(Cli, TrainTinyConfig) {
  const fs::path cfg = dir_ / "run.json";
  std::ofstream(cfg) << R"({"iterations": 2, "batch_size": 1, "hyperparams": {"group_size": 2},
                           "policy": {"context": 4, "embed": 4, "hidden": 4},
                           "render_samples": 1, "eval_every": 1,
                           "output_dir": ")"
                     << (dir_ / "run").string() << "\"}";
  const Result r = run("train --config " + cfg.string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoints" / "final.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "metrics.jsonl"));
}

}  // namespace
