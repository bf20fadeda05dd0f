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

// Command-line front end. Usage errors exit 2, runtime errors exit 1.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include "dogrpo/checkpoint.hpp"
#include "dogrpo/harness.hpp"
#include "dogrpo/policy.hpp"
#include "dogrpo/render.hpp"
#include "dogrpo/rewards.hpp"
#include "dogrpo/scene.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

int run_train(const std::string& config_path) {
  const dogrpo::RunConfig config = dogrpo::load_run_config(config_path);
  const dogrpo::TrainResult result = dogrpo::train(config);
  std::cout << "iterations: " << result.steps.size() << '\n'
            << "metrics: " << result.metrics.string() << '\n'
            << "checkpoint: " << result.final_checkpoint.string() << '\n';
  if (!result.steps.empty()) {
    const auto& last = result.steps.back();
    std::cout << "final mean_r_ha: " << last.mean_r_ha << '\n'
              << "final format_valid: " << last.format_valid << '\n';
  }
  return 0;
}

int run_eval(const std::string& path, int n, std::uint64_t seed) {
  const dogrpo::Checkpoint ck = dogrpo::load_checkpoint(path);
  std::cout << dogrpo::to_json(dogrpo::evaluate(ck, n, seed)).dump(2) << '\n';
  return 0;
}

int run_sample(const std::string& path, const std::string& text, std::uint64_t seed,
               bool greedy, const std::string& out) {
  const dogrpo::Checkpoint ck = dogrpo::load_checkpoint(path);
  const dogrpo::Prompt prompt = dogrpo::prompt_from_surface(dogrpo::tokenize(text));
  dogrpo::Rollout r;
  if (ck.kind == dogrpo::PolicyKind::kOracle) {
    r = dogrpo::oracle_response(prompt);
  } else {
    dogrpo::Rng rng(dogrpo::derive_seed(seed, "sample"));
    r = dogrpo::decode(ck.params, prompt, rng,
                       greedy ? dogrpo::Decoding::kGreedy : dogrpo::Decoding::kSample);
  }
  dogrpo::export_image(dogrpo::render(r.image), out);
  const dogrpo::RewardBreakdown b = dogrpo::score_rollout(r);
  std::cout << dogrpo::to_string(r.text) << '\n'
            << "image: " << out << '\n'
            << dogrpo::to_json(b).dump() << '\n';
  return 0;
}

int run_render(const std::string& tokens_path, const std::string& out) {
  std::ifstream in(tokens_path);
  if (!in) throw dogrpo::IoFailure("cannot open token file: " + tokens_path);
  dogrpo::TokenSeq seq;
  std::string word;
  while (in >> word) {
    const auto t = dogrpo::token_from_name(word);
    if (!t || !dogrpo::is_image(*t))
      throw dogrpo::MalformedPrompt("not an image token: '" + word + "'");
    seq.push_back(*t);
  }
  dogrpo::export_image(dogrpo::render(seq), out);
  std::cout << "image: " << out << '\n';
  return 0;
}

int run_corpus(int n, std::uint64_t seed, const std::string& out) {
  std::vector<dogrpo::Prompt> prompts;
  dogrpo::Rng rng(dogrpo::derive_seed(seed, "corpus"));
  const dogrpo::CorpusMix mix;
  for (int i = 0; i < n; ++i) {
    const dogrpo::Difficulty d = dogrpo::draw_difficulty(rng, mix);
    prompts.push_back(dogrpo::generate_prompt(rng.next() & dogrpo::kSeedMask, d));
  }
  dogrpo::write_corpus(out, prompts);
  std::cout << "prompts: " << prompts.size() << '\n';
  return 0;
}

int run_oracle(const std::string& out) {
  dogrpo::Checkpoint ck;
  ck.kind = dogrpo::PolicyKind::kOracle;
  dogrpo::save_checkpoint(ck, out);
  std::cout << "checkpoint: " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-objective GRPO on a toy text-to-grid task"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train a policy from a config file");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required();

  std::string ck_path;
  int n = 16;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation on held-out prompts");
  eval->add_option("--checkpoint", ck_path, "Checkpoint file")->required();
  eval->add_option("--n", n, "Prompts per difficulty")->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", seed, "Held-out prompt seed");

  std::string prompt_text;
  std::string out = "sample.ppm";
  bool greedy = false;
  auto* sample = app.add_subcommand("sample", "Decode one prompt and render the image");
  sample->add_option("--checkpoint", ck_path, "Checkpoint file")->required();
  sample->add_option("--prompt", prompt_text, "Prompt text, e.g. \"a red circle\"")->required();
  sample->add_option("--seed", seed, "Sampling seed");
  sample->add_flag("--greedy", greedy, "Argmax decoding instead of sampling");
  sample->add_option("--out", out, "Output pixmap path");

  std::string tokens_path;
  std::string render_out = "render.ppm";
  auto* render = app.add_subcommand("render", "Render a whitespace-separated image-token file");
  render->add_option("--tokens", tokens_path, "Token file")->required();
  render->add_option("--out", render_out, "Output pixmap path");

  std::string corpus_out;
  int corpus_n = 0;
  auto* corpus = app.add_subcommand("corpus", "Write a prompt corpus (JSON lines)");
  corpus->add_option("--n", corpus_n, "Number of prompts")->required()->check(CLI::NonNegativeNumber);
  corpus->add_option("--seed", seed, "Corpus seed")->required();
  corpus->add_option("--out", corpus_out, "Output path")->required();

  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Write a checkpoint for the scripted reference responder");
  oracle->add_option("--out", oracle_out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (*train) return run_train(config_path);
    if (*eval) return run_eval(ck_path, n, seed);
    if (*sample) return run_sample(ck_path, prompt_text, seed, greedy, out);
    if (*render) return run_render(tokens_path, render_out);
    if (*corpus) return run_corpus(corpus_n, seed, corpus_out);
    if (*oracle) return run_oracle(oracle_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
