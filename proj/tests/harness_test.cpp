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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dogrpo/checkpoint.hpp"
#include "dogrpo/harness.hpp"
#include "reference_rewards.hpp"

namespace dogrpo {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

RunConfig tiny_config(const fs::path& dir) {
  RunConfig c;
  c.iterations = 3;
  c.batch_size = 2;
  c.hyperparams.group_size = 3;
  c.dims = PolicyDims{6, 8, 16};
  c.output_dir = dir.string();
  c.checkpoint_every = 2;
  c.eval_every = 2;
  c.render_samples = 2;
  return c;
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.seed = 99;
  c.corpus = {0.5, 0.25, 0.25};
  c.hyperparams.kl_beta = 0.05;
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, DefaultsMatchReferenceSettings) {
  const RunConfig c = run_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.hyperparams.group_size, 8);
  EXPECT_EQ(c.hyperparams.kl_beta, 0.01);
  EXPECT_EQ(c.hyperparams.max_grad_norm, 1.0);
  EXPECT_EQ(c.iterations, 500);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(run_config_from_json({{"sed", 1}}), InvalidConfig);
  EXPECT_THROW(run_config_from_json({{"corpus", {{"single", 0.5}}}}), InvalidConfig);
  EXPECT_THROW(run_config_from_json({{"batch_size", 0}}), InvalidConfig);
  EXPECT_THROW(run_config_from_json({{"iterations", "many"}}), InvalidConfig);
  EXPECT_THROW(run_config_from_json({{"hyperparams", {{"clip", 0.2}}}}), InvalidConfig);
  try {
    load_run_config("/nonexistent/run.json");
    FAIL() << "expected IoFailure";
  } catch (const IoFailure& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.json"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Checkpoint ck{PolicyKind::kMlp, 12, PolicyParams::random_uniform(PolicyDims{}, 3, 0.7), {}};
  ck.hyperparams.learning_rate = 0.123456789;
  const Checkpoint back = checkpoint_from_string(checkpoint_to_string(ck));
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.step, 12);
  EXPECT_EQ(back.hyperparams.learning_rate, ck.hyperparams.learning_rate);
  const PolicyBundle bundle(ck.params);
  for (Difficulty d : kAllDifficulties) {
    for (const auto& r : sample_group(bundle, generate_prompt(5, d), 3, 8)) {
      const SequenceLogprobs a = logprob_eval(ck.params, r);
      const SequenceLogprobs b = logprob_eval(back.params, r);
      EXPECT_EQ(a.text, b.text);
      EXPECT_EQ(a.image, b.image);
    }
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const Checkpoint ck{PolicyKind::kMlp, 0, PolicyParams::random_uniform(PolicyDims{6, 4, 4}, 1), {}};
  std::string text = checkpoint_to_string(ck);
  auto j = nlohmann::json::parse(text);
  j["params"]["hidden_bias"][0] = j["params"]["hidden_bias"][0].get<double>() + 1e-9;
  EXPECT_THROW(checkpoint_from_string(j.dump()), ChecksumMismatch);
  EXPECT_THROW(checkpoint_from_string(text.substr(0, text.size() / 2)), ChecksumMismatch);
  j = nlohmann::json::parse(text);
  j["params"]["output_bias"].erase(0);
  EXPECT_THROW(checkpoint_from_string(j.dump()), ChecksumMismatch);
  j = nlohmann::json::parse(text);
  j["vocab_hash"] = "0000000000000000";
  EXPECT_THROW(checkpoint_from_string(j.dump()), VocabMismatch);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), IoFailure);
}

TEST(Train, ZeroIterationsWritesInitialCheckpointOnly) {
  TempDir dir("dogrpo_train_zero");
  RunConfig c = tiny_config(dir.path());
  c.iterations = 0;
  const TrainResult res = train(c);
  EXPECT_TRUE(res.steps.empty());
  EXPECT_EQ(slurp(res.metrics), "");
  const Checkpoint init = load_checkpoint((dir.path() / "checkpoints" / "step_000000.json").string());
  EXPECT_EQ(init.params, initial_params(c));
  EXPECT_EQ(load_checkpoint(res.final_checkpoint.string()).params, init.params);
  EXPECT_TRUE(fs::exists(dir.path() / "config.json"));
  EXPECT_EQ(run_config_from_json(nlohmann::json::parse(slurp(dir.path() / "config.json"))).seed,
            c.seed);
}

TEST(Train, MetricsScheduleAndSchema) {
  TempDir dir("dogrpo_train_schema");
  const RunConfig c = tiny_config(dir.path());
  const TrainResult res = train(c);
  ASSERT_EQ(res.steps.size(), 3u);
  std::istringstream in(slurp(res.metrics));
  std::string line;
  int steps = 0, rollouts = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    std::vector<std::string> expected;
    if (j.at("type") == "step") {
      ++steps;
      for (auto f : kStepFields) expected.emplace_back(f);
    } else {
      ASSERT_EQ(j.at("type"), "rollout");
      ++rollouts;
      for (auto f : kRolloutFields) expected.emplace_back(f);
    }
    std::sort(keys.begin(), keys.end());
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(keys, expected);
  }
  EXPECT_EQ(steps, 3);
  EXPECT_EQ(rollouts, 3 * c.batch_size * c.hyperparams.group_size);
  for (const char* name : {"step_000000.json", "step_000002.json", "step_000003.json", "final.json"})
    EXPECT_TRUE(fs::exists(dir.path() / "checkpoints" / name)) << name;
  EXPECT_FALSE(fs::exists(dir.path() / "checkpoints" / "step_000001.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "renders" / "iter000002_rollout0.ppm"));
  EXPECT_TRUE(fs::exists(dir.path() / "renders" / "iter000002_rollout1.ppm"));
}

TEST(Train, IdenticalConfigsGiveIdenticalLogs) {
  TempDir a("dogrpo_train_det_a");
  TempDir b("dogrpo_train_det_b");
  const TrainResult ra = train(tiny_config(a.path()));
  const TrainResult rb = train(tiny_config(b.path()));
  EXPECT_EQ(slurp(ra.metrics), slurp(rb.metrics));
  EXPECT_EQ(slurp(ra.final_checkpoint), slurp(rb.final_checkpoint));
}

TEST(Train, NonFiniteUpdateKeepsLastGoodCheckpoint) {
  TempDir dir("dogrpo_train_nonfinite");
  RunConfig c = tiny_config(dir.path());
  c.hyperparams.learning_rate = 1e308;
  c.iterations = 5;
  EXPECT_THROW(train(c), NonFiniteGradient);
  const Checkpoint kept = load_checkpoint((dir.path() / "checkpoints" / "step_000000.json").string());
  EXPECT_TRUE(kept.params.all_finite());
  EXPECT_FALSE(fs::exists(dir.path() / "checkpoints" / "final.json"));
}

TEST(Train, UncreatableOutputDirIsAnIoFailure) {
  RunConfig c = tiny_config("/proc/dogrpo/not-allowed");
  EXPECT_THROW(train(c), IoFailure);
}

TEST(Evaluate, ZeroPromptsGivesEmptyReport) {
  const Checkpoint ck{PolicyKind::kMlp, 0, PolicyParams(PolicyDims{}), {}};
  const EvalReport r = evaluate(ck, 0, 1);
  EXPECT_EQ(r.prompts, 0);
  EXPECT_TRUE(r.by_difficulty.empty());
}

TEST(Evaluate, OracleScoresPerfectly) {
  Checkpoint ck;
  ck.kind = PolicyKind::kOracle;
  const EvalReport r = evaluate(checkpoint_from_string(checkpoint_to_string(ck)), 40, 7);
  EXPECT_EQ(r.prompts, 120);
  EXPECT_EQ(r.format_valid_rate, 1.0);
  EXPECT_EQ(r.detection_rate, 1.0);
  EXPECT_EQ(r.vqa_rate, 1.0);
  for (const auto& [name, s] : r.by_difficulty) {
    EXPECT_EQ(s.mean_r_ha, 3.0) << name;
    EXPECT_EQ(s.mean_r_sa, 2.0) << name;
    EXPECT_EQ(s.mean_r_sp, 1.0) << name;
  }
}

TEST(Evaluate, HeldOutSeedsAreDisjointFromTraining) {
  for (int i = 0; i < 100; ++i) EXPECT_NE(held_out_seed(17, Difficulty::kSingle, i) & kHeldOutBit, 0u);
  Rng corpus(derive_seed(17, "corpus"));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(corpus.next() & kSeedMask & kHeldOutBit, 0u);
}

// Monte-Carlo oracle: i.i.d. uniform draws over the admissible text tokens,
// scored by the reference parser, against the library's sampler on the
// all-zero (uniform) policy.
TEST(Evaluate, UniformPolicyIsRarelyFormatValid) {
  constexpr int kSamples = 4000;
  const auto text_range = phase_mask(Phase::kText);
  std::mt19937_64 gen(2026);
  std::uniform_int_distribution<int> pick(text_range.begin, text_range.end - 1);
  int oracle_valid = 0;
  for (int s = 0; s < kSamples; ++s) {
    ref::Words words;
    for (int j = 0; j < kMaxTextLength; ++j) {
      const Token t = token_at(pick(gen));
      words.push_back(token_name(t));
      if (t == Token::kEndText) break;
    }
    const auto thought = ref::span(words, 0, "<thought>", "</thought>");
    const auto desc =
        ref::span(words, thought ? thought->second : 0, "<description>", "</description>");
    oracle_valid += thought && desc;
  }
  const PolicyBundle uniform{PolicyParams(PolicyDims{})};
  int sampled_valid = 0;
  for (int s = 0; s < kSamples / 8; ++s) {
    const Prompt p = generate_prompt(held_out_seed(1, Difficulty::kSingle, s), Difficulty::kSingle);
    for (const auto& r : sample_group(uniform, p, 8, static_cast<std::uint64_t>(s)))
      sampled_valid += score_rollout(r).format_valid();
  }
  const double oracle_rate = static_cast<double>(oracle_valid) / kSamples;
  const double sampled_rate = static_cast<double>(sampled_valid) / kSamples;
  std::cout << "uniform-policy format-valid rate: oracle " << oracle_rate << ", sampled "
            << sampled_rate << '\n';
  EXPECT_LT(oracle_rate, 0.05);
  EXPECT_LT(sampled_rate, 0.05);
  // Both are binomial estimates of the same probability; 5 sigma of slack.
  const double sigma = std::sqrt(2.0 * 0.02 * 0.98 / kSamples);
  EXPECT_NEAR(sampled_rate, oracle_rate, 5 * sigma);

  const EvalReport greedy = evaluate(Checkpoint{PolicyKind::kMlp, 0, PolicyParams(PolicyDims{}), {}},
                                     50, 3, std::array{Difficulty::kSingle});
  EXPECT_EQ(greedy.format_valid_rate, 0.0);
}

TEST(CanonicalLayout, RespectsEveryRelation) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Prompt p = generate_prompt(seed, Difficulty::kRelational);
    const RewardBreakdown b = score_rollout(oracle_response(p));
    EXPECT_EQ(b.r_ha, 3.0) << to_string(p.surface);
  }
}

}  // namespace
}  // namespace dogrpo
