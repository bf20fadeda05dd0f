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

// Training and evaluation driver.
//
// Random streams, all derived from RunConfig::seed by label:
//   "init"      parameter initialization
//   "corpus"    training prompt difficulties and prompt seeds
//   "sampling"  per-iteration rollout sampling seeds
// Held-out evaluation prompts use seeds with bit 62 set; training prompt
// seeds always have it clear.

#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dogrpo/checkpoint.hpp"
#include "dogrpo/common.hpp"
#include "dogrpo/optimizer.hpp"
#include "dogrpo/policy.hpp"
#include "dogrpo/render.hpp"
#include "dogrpo/rewards.hpp"
#include "dogrpo/scene.hpp"

namespace dogrpo {

inline constexpr std::uint64_t kHeldOutBit = std::uint64_t{1} << 62;
inline constexpr std::uint64_t kSeedMask = kHeldOutBit - 1;

struct CorpusMix {
  double single = 1.0 / 3.0;
  double pair = 1.0 / 3.0;
  double relational = 1.0 / 3.0;
};

struct RunConfig {
  std::uint64_t seed = 17;
  int iterations = 500;
  int batch_size = 8;
  HyperParams hyperparams;
  PolicyDims dims;
  // Wide enough that greedy decoding at step 0 is not a prompt-blind cycle.
  double init_scale = 0.5;
  CorpusMix corpus;
  std::string output_dir = "runs/default";
  int checkpoint_every = 100;
  int eval_every = 100;
  int render_samples = 4;
  bool log_rollouts = true;
};

inline void validate(const RunConfig& c) {
  validate(c.hyperparams);
  if (c.iterations < 0) throw InvalidConfig("iterations must be >= 0");
  if (c.batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (c.checkpoint_every < 1) throw InvalidConfig("checkpoint_every must be >= 1");
  if (c.eval_every < 0 || c.render_samples < 0)
    throw InvalidConfig("eval_every and render_samples must be >= 0");
  if (c.dims.context < 1 || c.dims.embed < 1 || c.dims.hidden < 1)
    throw InvalidConfig("policy dimensions must be positive");
  if (!(c.init_scale >= 0.0)) throw InvalidConfig("init_scale must be >= 0");
  const double total = c.corpus.single + c.corpus.pair + c.corpus.relational;
  if (c.corpus.single < 0 || c.corpus.pair < 0 || c.corpus.relational < 0 ||
      std::abs(total - 1.0) > 1e-9)
    throw InvalidConfig("corpus proportions must be non-negative and sum to 1");
  if (c.output_dir.empty()) throw InvalidConfig("output_dir must be set");
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"hyperparams", to_json(c.hyperparams)},
          {"policy",
           {{"context", c.dims.context},
            {"embed", c.dims.embed},
            {"hidden", c.dims.hidden},
            {"init_scale", c.init_scale}}},
          {"corpus",
           {{"single", c.corpus.single}, {"pair", c.corpus.pair}, {"relational", c.corpus.relational}}},
          {"output_dir", c.output_dir},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_every", c.eval_every},
          {"render_samples", c.render_samples},
          {"log_rollouts", c.log_rollouts}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "iterations") c.iterations = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "hyperparams") c.hyperparams = hyperparams_from_json(value);
      else if (key == "policy") {
        for (const auto& [pk, pv] : value.items()) {
          if (pk == "context") c.dims.context = pv.get<int>();
          else if (pk == "embed") c.dims.embed = pv.get<int>();
          else if (pk == "hidden") c.dims.hidden = pv.get<int>();
          else if (pk == "init_scale") c.init_scale = pv.get<double>();
          else throw InvalidConfig("unknown policy key '" + pk + "'");
        }
      } else if (key == "corpus") {
        c.corpus = CorpusMix{0.0, 0.0, 0.0};
        for (const auto& [ck, cv] : value.items()) {
          if (ck == "single") c.corpus.single = cv.get<double>();
          else if (ck == "pair") c.corpus.pair = cv.get<double>();
          else if (ck == "relational") c.corpus.relational = cv.get<double>();
          else throw InvalidConfig("unknown corpus key '" + ck + "'");
        }
      } else if (key == "output_dir") c.output_dir = value.get<std::string>();
      else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
      else if (key == "eval_every") c.eval_every = value.get<int>();
      else if (key == "render_samples") c.render_samples = value.get<int>();
      else if (key == "log_rollouts") c.log_rollouts = value.get<bool>();
      else throw InvalidConfig("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad config value: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

inline PolicyParams initial_params(const RunConfig& c) {
  return PolicyParams::random_uniform(c.dims, derive_seed(c.seed, "init"), c.init_scale);
}

inline Difficulty draw_difficulty(Rng& rng, const CorpusMix& mix) {
  const double u = rng.uniform();
  if (u < mix.single) return Difficulty::kSingle;
  if (u < mix.single + mix.pair) return Difficulty::kPair;
  return Difficulty::kRelational;
}

inline std::uint64_t held_out_seed(std::uint64_t seed, Difficulty d, int index) {
  return kHeldOutBit |
         (derive_seed(derive_seed(seed, name(d)), static_cast<std::uint64_t>(index)) & kSeedMask);
}

// ---------------------------------------------------------------------------
// Scripted reference responder: canonical reasoning and a layout that
// satisfies every reward oracle for template-generated prompts.

namespace detail {

// Top-left anchors of 1x2 object blobs, separated by empty cells.
inline constexpr std::array<std::array<int, 2>, 6> kSlots = {
    std::array<int, 2>{0, 0}, {0, 3}, {2, 0}, {2, 3}, {4, 0}, {4, 3}};

}  // namespace detail

inline Grid canonical_layout(const SceneSpec& scene) {
  Grid grid = Grid::blank();
  std::vector<int> order;  // one slot index per object instance, object-major
  std::vector<char> used(detail::kSlots.size(), 0);
  auto place = [&](const ObjectSpec& o, int slot) {
    const auto [r, c] = detail::kSlots[static_cast<std::size_t>(slot)];
    grid.at(r, c) = Cell::of(o.shape, o.color);
    grid.at(r, c + 1) = Cell::of(o.shape, o.color);
    used[static_cast<std::size_t>(slot)] = 1;
  };
  std::size_t first_free_object = 0;
  if (scene.relations.size() == 1 && scene.objects.size() >= 2 &&
      scene.relations[0].subject == 0 && scene.relations[0].object == 1 &&
      scene.objects[0].count == 1 && scene.objects[1].count == 1) {
    int subject_slot = 0, object_slot = 1;
    switch (scene.relations[0].relation) {
      case Relation::kLeftOf: subject_slot = 0; object_slot = 1; break;
      case Relation::kRightOf: subject_slot = 1; object_slot = 0; break;
      case Relation::kAbove: subject_slot = 0; object_slot = 2; break;
      case Relation::kBelow: subject_slot = 2; object_slot = 0; break;
    }
    place(scene.objects[0], subject_slot);
    place(scene.objects[1], object_slot);
    first_free_object = 2;
  }
  for (std::size_t m = first_free_object; m < scene.objects.size(); ++m) {
    for (int n = 0; n < scene.objects[m].count; ++n) {
      int slot = 0;
      while (slot < static_cast<int>(used.size()) && used[static_cast<std::size_t>(slot)]) ++slot;
      if (slot == static_cast<int>(used.size())) return grid;
      place(scene.objects[m], slot);
    }
  }
  return grid;
}

inline Rollout oracle_response(const Prompt& prompt) {
  Rollout r;
  r.prompt = prompt;
  r.text = tagged_reasoning(canonical_thought(prompt.truth), prompt.surface);
  r.image = read_back(canonical_layout(prompt.truth));
  r.logp_old_text.assign(r.text.size(), 0.0);
  r.logp_old_image.assign(r.image.size(), 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

using Responder = std::function<Rollout(const Prompt&)>;

inline Responder responder_for(const Checkpoint& ck) {
  if (ck.kind == PolicyKind::kOracle) return oracle_response;
  return [params = ck.params](const Prompt& p) { return greedy_decode(params, p); };
}

struct DifficultyStats {
  int prompts = 0;
  double mean_r_ha = 0.0;
  double mean_r_sa = 0.0;
  double mean_r_sp = 0.0;
};

struct EvalReport {
  int prompts = 0;
  std::map<std::string, DifficultyStats> by_difficulty;
  double format_valid_rate = 0.0;
  double detection_rate = 0.0;  // mean r_det
  double vqa_rate = 0.0;        // mean r_vqa
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json by = nlohmann::json::object();
  for (const auto& [k, s] : r.by_difficulty) {
    by[k] = {{"prompts", s.prompts},
             {"mean_r_ha", s.mean_r_ha},
             {"mean_r_sa", s.mean_r_sa},
             {"mean_r_sp", s.mean_r_sp}};
  }
  return {{"prompts", r.prompts},
          {"by_difficulty", by},
          {"format_valid_rate", r.format_valid_rate},
          {"detection_rate", r.detection_rate},
          {"vqa_rate", r.vqa_rate}};
}

// Scores `n_prompts` held-out prompts per listed difficulty.
inline EvalReport evaluate(const Responder& respond, int n_prompts, std::uint64_t seed,
                           std::span<const Difficulty> difficulties = kAllDifficulties) {
  EvalReport report;
  if (n_prompts <= 0) return report;
  for (Difficulty d : difficulties) {
    DifficultyStats stats;
    for (int i = 0; i < n_prompts; ++i) {
      const Prompt p = generate_prompt(held_out_seed(seed, d, i), d);
      const RewardBreakdown b = score_rollout(respond(p));
      stats.prompts += 1;
      stats.mean_r_ha += b.r_ha;
      stats.mean_r_sa += b.r_sa;
      stats.mean_r_sp += b.r_sp;
      report.format_valid_rate += b.format_valid() ? 1.0 : 0.0;
      report.detection_rate += b.r_det;
      report.vqa_rate += b.r_vqa;
    }
    stats.mean_r_ha /= stats.prompts;
    stats.mean_r_sa /= stats.prompts;
    stats.mean_r_sp /= stats.prompts;
    report.prompts += stats.prompts;
    report.by_difficulty[std::string(name(d))] = stats;
  }
  report.format_valid_rate /= report.prompts;
  report.detection_rate /= report.prompts;
  report.vqa_rate /= report.prompts;
  return report;
}

inline EvalReport evaluate(const Checkpoint& ck, int n_prompts, std::uint64_t seed,
                           std::span<const Difficulty> difficulties = kAllDifficulties) {
  return evaluate(responder_for(ck), n_prompts, seed, difficulties);
}

// ---------------------------------------------------------------------------
// Training
//
// Run directory layout:
//   config.json                 resolved configuration, defaults included
//   metrics.jsonl               one record per line (schema below)
//   checkpoints/step_NNNNNN.json
//   checkpoints/final.json
//   renders/iterNNNNNN_rolloutI.ppm
//
// Metrics records:
//   {"type":"step","iteration","mean_r_sa","mean_r_sp","mean_r_ha",
//    "objective","kl","grad_norm","clipped_grad_norm","format_valid"}
//   {"type":"rollout","iteration","prompt","rollout","surface",
//    "r_format","r_prop","r_sa","r_sp","r_vqa","r_det","r_align","r_ha"}

inline constexpr std::array<std::string_view, 10> kStepFields = {
    "type", "iteration", "mean_r_sa", "mean_r_sp", "mean_r_ha",
    "objective", "kl", "grad_norm", "clipped_grad_norm", "format_valid"};
inline constexpr std::array<std::string_view, 13> kRolloutFields = {
    "type", "iteration", "prompt", "rollout", "surface", "r_format", "r_prop",
    "r_sa", "r_sp", "r_vqa", "r_det", "r_align", "r_ha"};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics;
  std::vector<StepReport> steps;
};

inline std::string step_record(int iteration, const StepReport& s) {
  nlohmann::ordered_json j;
  j["type"] = "step";
  j["iteration"] = iteration;
  j["mean_r_sa"] = s.mean_r_sa;
  j["mean_r_sp"] = s.mean_r_sp;
  j["mean_r_ha"] = s.mean_r_ha;
  j["objective"] = s.objective;
  j["kl"] = s.kl;
  j["grad_norm"] = s.grad_norm;
  j["clipped_grad_norm"] = s.clipped_grad_norm;
  j["format_valid"] = s.format_valid;
  return j.dump();
}

inline std::string rollout_record(int iteration, int prompt_index, int rollout_index,
                                  const Prompt& prompt, const RewardBreakdown& b) {
  nlohmann::ordered_json j;
  j["type"] = "rollout";
  j["iteration"] = iteration;
  j["prompt"] = prompt_index;
  j["rollout"] = rollout_index;
  j["surface"] = to_string(prompt.surface);
  j["r_format"] = b.r_format;
  j["r_prop"] = b.r_prop;
  j["r_sa"] = b.r_sa;
  j["r_sp"] = b.r_sp;
  j["r_vqa"] = b.r_vqa;
  j["r_det"] = b.r_det;
  j["r_align"] = b.r_align;
  j["r_ha"] = b.r_ha;
  return j.dump();
}

inline std::string step_checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06d.json", step);
  return buf;
}

inline void write_renders(const PolicyParams& params, const RunConfig& config, int iteration,
                          const std::filesystem::path& dir) {
  for (int i = 0; i < config.render_samples; ++i) {
    const Difficulty d = kAllDifficulties[static_cast<std::size_t>(i) % kAllDifficulties.size()];
    const Prompt p = generate_prompt(held_out_seed(config.seed, d, i), d);
    const Rollout r = greedy_decode(params, p);
    char buf[64];
    std::snprintf(buf, sizeof buf, "iter%06d_rollout%d.ppm", iteration, i);
    export_image(render(r.image), (dir / buf).string());
  }
}

// Runs `config.iterations` training steps. On NonFiniteGradient the exception
// propagates and the checkpoints already written are left in place.
inline TrainResult train(const RunConfig& config) {
  validate(config);
  namespace fs = std::filesystem;
  const fs::path root(config.output_dir);
  std::error_code ec;
  fs::create_directories(root / "checkpoints", ec);
  if (!ec) fs::create_directories(root / "renders", ec);
  if (ec) throw IoFailure("cannot create run directory " + root.string() + ": " + ec.message());

  {
    std::ofstream cfg(root / "config.json", std::ios::binary);
    if (!cfg) throw IoFailure("cannot write " + (root / "config.json").string());
    cfg << to_json(config).dump(2) << '\n';
  }

  TrainResult result;
  result.metrics = root / "metrics.jsonl";
  std::ofstream metrics(result.metrics, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoFailure("cannot write " + result.metrics.string());

  PolicyBundle bundle(initial_params(config));
  Checkpoint ck{PolicyKind::kMlp, 0, bundle.current, config.hyperparams};
  save_checkpoint(ck, (root / "checkpoints" / step_checkpoint_name(0)).string());

  Rng corpus(derive_seed(config.seed, "corpus"));
  const std::uint64_t sampling = derive_seed(config.seed, "sampling");
  for (int it = 1; it <= config.iterations; ++it) {
    std::vector<Prompt> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
      const Difficulty d = draw_difficulty(corpus, config.corpus);
      batch.push_back(generate_prompt(corpus.next() & kSeedMask, d));
    }
    StepReport report = train_step(bundle, batch, config.hyperparams,
                                   derive_seed(sampling, static_cast<std::uint64_t>(it)));
    metrics << step_record(it, report) << '\n';
    if (config.log_rollouts) {
      const int g = config.hyperparams.group_size;
      for (std::size_t i = 0; i < report.breakdowns.size(); ++i) {
        const int prompt_index = static_cast<int>(i) / g;
        metrics << rollout_record(it, prompt_index, static_cast<int>(i) % g,
                                  batch[static_cast<std::size_t>(prompt_index)], report.breakdowns[i])
                << '\n';
      }
    }
    if (!metrics) throw IoFailure("failed writing " + result.metrics.string());
    if (it % config.checkpoint_every == 0 || it == config.iterations) {
      ck.step = it;
      ck.params = bundle.current;
      save_checkpoint(ck, (root / "checkpoints" / step_checkpoint_name(it)).string());
    }
    if (config.eval_every > 0 && it % config.eval_every == 0)
      write_renders(bundle.current, config, it, root / "renders");
    result.steps.push_back(std::move(report));
  }
  metrics.flush();
  ck.step = config.iterations;
  ck.params = bundle.current;
  result.final_checkpoint = root / "checkpoints" / "final.json";
  save_checkpoint(ck, result.final_checkpoint.string());
  return result;
}

}  // namespace dogrpo
