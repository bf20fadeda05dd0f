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

// Checkpoint documents (JSON):
//
//   {
//     "format": "dogrpo-checkpoint", "version": 1,
//     "vocab_hash": "<16 hex digits>",
//     "kind": "mlp" | "oracle",
//     "step": <int>,
//     "dims": {"context": k, "embed": E, "hidden": H},
//     "hyperparams": {...},
//     "params": {"token_embedding": [...], "hidden_weights": [...],
//                "hidden_bias": [...], "output_weights": [...],
//                "output_bias": [...]},
//     "checksum": "<16 hex digits>"
//   }
//
// Parameter arrays follow the PolicyParams flat layout and are written with
// shortest round-trip decimal formatting, so save/load is bit-exact. The
// checksum is FNV-1a over the little-endian bytes of the flat vector. An
// "oracle" checkpoint carries no parameters and stands for the scripted
// reference responder.

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dogrpo/common.hpp"
#include "dogrpo/optimizer.hpp"
#include "dogrpo/policy.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

enum class PolicyKind : std::uint8_t { kMlp, kOracle };

struct Checkpoint {
  PolicyKind kind = PolicyKind::kMlp;
  int step = 0;
  PolicyParams params;
  HyperParams hyperparams;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t params_checksum(std::span<const double> flat) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : flat) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline nlohmann::json to_json(const HyperParams& hp) {
  return {{"clip_epsilon", hp.clip_epsilon},
          {"kl_beta", hp.kl_beta},
          {"learning_rate", hp.learning_rate},
          {"group_size", hp.group_size},
          {"std_floor", hp.std_floor},
          {"max_grad_norm", hp.max_grad_norm},
          {"use_semantic_anchoring", hp.use_semantic_anchoring},
          {"use_semantic_projection", hp.use_semantic_projection}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline HyperParams hyperparams_from_json(const nlohmann::json& j) {
  HyperParams hp;
  for (const auto& [key, value] : j.items()) {
    if (key == "clip_epsilon") hp.clip_epsilon = value.get<double>();
    else if (key == "kl_beta") hp.kl_beta = value.get<double>();
    else if (key == "learning_rate") hp.learning_rate = value.get<double>();
    else if (key == "group_size") hp.group_size = value.get<int>();
    else if (key == "std_floor") hp.std_floor = value.get<double>();
    else if (key == "max_grad_norm") hp.max_grad_norm = value.get<double>();
    else if (key == "use_semantic_anchoring") hp.use_semantic_anchoring = value.get<bool>();
    else if (key == "use_semantic_projection") hp.use_semantic_projection = value.get<bool>();
    else throw InvalidConfig("unknown hyperparameter '" + key + "'");
  }
  validate(hp);
  return hp;
}

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = "dogrpo-checkpoint";
  j["version"] = 1;
  j["vocab_hash"] = hex64(vocab_hash());
  j["kind"] = ck.kind == PolicyKind::kOracle ? "oracle" : "mlp";
  j["step"] = ck.step;
  j["hyperparams"] = to_json(ck.hyperparams);
  if (ck.kind == PolicyKind::kMlp) {
    const PolicyParams& p = ck.params;
    const auto& d = p.dims();
    j["dims"] = {{"context", d.context}, {"embed", d.embed}, {"hidden", d.hidden}};
    const auto flat = p.flat();
    auto slice = [&](std::size_t from, std::size_t to) {
      return std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(from),
                                 flat.begin() + static_cast<std::ptrdiff_t>(to));
    };
    j["params"] = {
        {"token_embedding", slice(p.embedding_offset(), p.hidden_weights_offset())},
        {"hidden_weights", slice(p.hidden_weights_offset(), p.hidden_bias_offset())},
        {"hidden_bias", slice(p.hidden_bias_offset(), p.output_weights_offset())},
        {"output_weights", slice(p.output_weights_offset(), p.output_bias_offset())},
        {"output_bias", slice(p.output_bias_offset(), p.size())}};
    j["checksum"] = hex64(params_checksum(flat));
  }
  return j.dump() + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumMismatch(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "dogrpo-checkpoint")
      throw ChecksumMismatch("not a dogrpo checkpoint");
    if (j.at("vocab_hash").get<std::string>() != hex64(vocab_hash()))
      throw VocabMismatch("checkpoint vocabulary hash " + j.at("vocab_hash").get<std::string>() +
                          " does not match " + hex64(vocab_hash()));
    Checkpoint ck;
    ck.step = j.at("step").get<int>();
    ck.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "oracle") {
      ck.kind = PolicyKind::kOracle;
      return ck;
    }
    if (kind != "mlp") throw ChecksumMismatch("unknown policy kind '" + kind + "'");
    const auto& d = j.at("dims");
    const PolicyDims dims{d.at("context").get<int>(), d.at("embed").get<int>(),
                          d.at("hidden").get<int>()};
    if (dims.context < 1 || dims.embed < 1 || dims.hidden < 1)
      throw ChecksumMismatch("checkpoint has invalid dimensions");
    ck.params = PolicyParams(dims);
    auto flat = ck.params.flat();
    std::size_t at = 0;
    for (const char* block :
         {"token_embedding", "hidden_weights", "hidden_bias", "output_weights", "output_bias"}) {
      for (const auto& v : j.at("params").at(block)) {
        if (at == flat.size()) throw ChecksumMismatch("checkpoint has too many parameters");
        flat[at++] = v.get<double>();
      }
    }
    if (at != flat.size()) throw ChecksumMismatch("checkpoint has too few parameters");
    if (hex64(params_checksum(flat)) != j.at("checksum").get<std::string>())
      throw ChecksumMismatch("checkpoint checksum mismatch");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumMismatch(std::string("checkpoint is missing fields: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_string(ck);
  if (!out) throw IoFailure("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace dogrpo
