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

// Reward stack for one rollout, computed by exact oracles:
//
//   semantic anchoring   r_sa = r_format + r_prop        (reasoning text)
//   semantic projection  r_sp = hpm(description, grid)   (image vs. description)
//   holistic alignment   r_ha = r_vqa + r_det + r_align  (image vs. prompt)
//
// hpm() is a deterministic preference score: 0.8 * semantic + 0.2 * aesthetic.

#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "dogrpo/render.hpp"
#include "dogrpo/scene.hpp"
#include "dogrpo/sequence.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

inline constexpr double kThoughtWeight = 0.5;
inline constexpr double kDescriptionWeight = 0.5;
inline constexpr double kHpmSemanticWeight = 0.8;
inline constexpr double kHpmAestheticWeight = 0.2;

struct RewardBreakdown {
  double r_format = 0.0;
  double r_prop = 0.0;
  double r_sa = 0.0;
  double r_sp = 0.0;
  double r_vqa = 0.0;
  double r_det = 0.0;
  double r_align = 0.0;
  double r_ha = 0.0;

  bool format_valid() const { return r_format == 1.0; }
};

inline nlohmann::json to_json(const RewardBreakdown& b) {
  return {{"r_format", b.r_format}, {"r_prop", b.r_prop}, {"r_sa", b.r_sa},
          {"r_sp", b.r_sp},         {"r_vqa", b.r_vqa},   {"r_det", b.r_det},
          {"r_align", b.r_align},   {"r_ha", b.r_ha}};
}

// A 4-connected component of identical non-empty cells. The centroid is
// kept as integer coordinate sums over `size` so comparisons stay exact.
struct DetectedObject {
  Shape shape;
  Color color;
  std::vector<std::array<int, 2>> cells;  // (row, col), discovery order
  int row_sum = 0;
  int col_sum = 0;

  int size() const { return static_cast<int>(cells.size()); }
  double centroid_row() const { return static_cast<double>(row_sum) / size(); }
  double centroid_col() const { return static_cast<double>(col_sum) / size(); }
  bool is(Shape s, Color c) const { return shape == s && color == c; }
};

// Components ordered by their first cell in row-major order.
inline std::vector<DetectedObject> detect(const Grid& grid) {
  std::vector<DetectedObject> out;
  std::vector<char> seen(grid.cells.size(), 0);
  std::vector<std::array<int, 2>> stack;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Cell& start = grid.at(r, c);
      if (!start.filled || seen[static_cast<std::size_t>(r * grid.width + c)]) continue;
      DetectedObject obj{start.shape, start.color, {}, 0, 0};
      stack.assign(1, {r, c});
      seen[static_cast<std::size_t>(r * grid.width + c)] = 1;
      while (!stack.empty()) {
        const auto [cr, cc] = stack.back();
        stack.pop_back();
        obj.cells.push_back({cr, cc});
        obj.row_sum += cr;
        obj.col_sum += cc;
        constexpr int kDr[] = {-1, 1, 0, 0};
        constexpr int kDc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int nr = cr + kDr[k];
          const int nc = cc + kDc[k];
          if (nr < 0 || nr >= grid.height || nc < 0 || nc >= grid.width) continue;
          const auto idx = static_cast<std::size_t>(nr * grid.width + nc);
          if (seen[idx] || !(grid.cells[idx] == start)) continue;
          seen[idx] = 1;
          stack.push_back({nr, nc});
        }
      }
      out.push_back(std::move(obj));
    }
  }
  return out;
}

// Relation between two centroids under the dominance rule: left/right needs
// |dcol| > |drow|, above/below needs |drow| > |dcol|. Exact integer math.
inline bool relation_holds(const DetectedObject& a, const DetectedObject& b, Relation rel) {
  const long long na = a.size();
  const long long nb = b.size();
  const long long dcol = static_cast<long long>(a.col_sum) * nb - static_cast<long long>(b.col_sum) * na;
  const long long drow = static_cast<long long>(a.row_sum) * nb - static_cast<long long>(b.row_sum) * na;
  const long long adc = std::llabs(dcol);
  const long long adr = std::llabs(drow);
  switch (rel) {
    case Relation::kLeftOf: return dcol < 0 && adc > adr;
    case Relation::kRightOf: return dcol > 0 && adc > adr;
    case Relation::kAbove: return drow < 0 && adr > adc;
    case Relation::kBelow: return drow > 0 && adr > adc;
  }
  return false;
}

inline bool relation_exists(const std::vector<DetectedObject>& objects, const ObjectSpec& subject,
                            const ObjectSpec& object, Relation rel) {
  for (const auto& a : objects) {
    if (!a.is(subject.shape, subject.color)) continue;
    for (const auto& b : objects) {
      if (b.is(object.shape, object.color) && relation_holds(a, b, rel)) return true;
    }
  }
  return false;
}

inline double format_reward(const ParsedReasoning& parsed) {
  return kThoughtWeight * (parsed.thought ? 1.0 : 0.0) +
         kDescriptionWeight * (parsed.description ? 1.0 : 0.0);
}

// Deterministic text QA over a description span. Returns nullopt for "no
// answer".
inline std::optional<Token> answer_from_text(const TokenSeq& description, const QAItem& q) {
  auto find_shape = [&](Shape s) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < description.size(); ++i)
      if (as_shape(description[i]) == s) return i;
    return std::nullopt;
  };
  switch (q.kind) {
    case QuestionKind::kColor: {
      const auto i = find_shape(q.subject.shape);
      if (!i || *i == 0 || !as_color(description[*i - 1])) return std::nullopt;
      return description[*i - 1];
    }
    case QuestionKind::kCount: {
      const auto i = find_shape(q.subject.shape);
      if (!i) return std::nullopt;
      std::size_t k = *i;
      if (k > 0 && as_color(description[k - 1])) --k;
      if (k == 0) return std::nullopt;
      const Token head = description[k - 1];
      if (head == Token::kA) return Token::kOne;
      if (as_count(head)) return head;
      return std::nullopt;
    }
    case QuestionKind::kRelation: {
      for (std::size_t p = 0; p < description.size(); ++p) {
        if (!as_relation(description[p])) continue;
        std::optional<Shape> before;
        for (std::size_t i = p; i-- > 0;) {
          if ((before = as_shape(description[i]))) break;
        }
        std::optional<Shape> after;
        for (std::size_t i = p + 1; i < description.size(); ++i) {
          if ((after = as_shape(description[i]))) break;
        }
        if (before == q.subject.shape && after == q.object.shape) return description[p];
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// Deterministic image QA over detected components.
inline std::optional<Token> answer_from_image(const std::vector<DetectedObject>& objects,
                                              const QAItem& q) {
  switch (q.kind) {
    case QuestionKind::kColor: {
      std::optional<Color> color;
      for (const auto& o : objects) {
        if (o.shape != q.subject.shape) continue;
        if (color && *color != o.color) return std::nullopt;
        color = o.color;
      }
      if (!color) return std::nullopt;
      return color_token(*color);
    }
    case QuestionKind::kCount: {
      int n = 0;
      for (const auto& o : objects) n += o.shape == q.subject.shape;
      if (n < 1 || n > 3) return std::nullopt;
      return count_token(n);
    }
    case QuestionKind::kRelation: {
      std::optional<Relation> found;
      for (int r = 0; r < kNumRelations; ++r) {
        const auto rel = static_cast<Relation>(r);
        if (!relation_exists(objects, q.subject, q.object, rel)) continue;
        if (found) return std::nullopt;
        found = rel;
      }
      if (!found) return std::nullopt;
      return relation_token(*found);
    }
  }
  return std::nullopt;
}

inline std::optional<Token> answer_from_image(const Grid& grid, const QAItem& q) {
  return answer_from_image(detect(grid), q);
}

inline double propagation_reward(const std::optional<TokenSeq>& description,
                                 const std::vector<QAItem>& questions) {
  if (!description || questions.empty()) return 0.0;
  int hits = 0;
  for (const auto& q : questions) hits += answer_from_text(*description, q) == q.reference_answer;
  return static_cast<double>(hits) / static_cast<double>(questions.size());
}

inline double vqa_reward(const std::vector<DetectedObject>& objects,
                         const std::vector<QAItem>& questions) {
  if (questions.empty()) return 0.0;
  int hits = 0;
  for (const auto& q : questions) hits += answer_from_image(objects, q) == q.reference_answer;
  return static_cast<double>(hits) / static_cast<double>(questions.size());
}

inline double vqa_reward(const Grid& grid, const std::vector<QAItem>& questions) {
  return vqa_reward(detect(grid), questions);
}

inline double detection_reward(const SceneSpec& scene, const std::vector<DetectedObject>& objects) {
  if (scene.objects.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t m = 0; m < scene.objects.size(); ++m) {
    const ObjectSpec& spec = scene.objects[m];
    int components = 0;
    for (const auto& o : objects) components += o.is(spec.shape, spec.color);
    const int present = components >= 1;
    const int count_ok = components == spec.count;
    int relations_ok = 1;
    for (const auto& r : scene.relations) {
      if (r.subject != static_cast<int>(m) && r.object != static_cast<int>(m)) continue;
      if (!relation_exists(objects, scene.objects[r.subject], scene.objects[r.object],
                           r.relation))
        relations_ok = 0;
    }
    total += static_cast<double>(present + count_ok + relations_ok) / 3.0;
  }
  return total / static_cast<double>(scene.objects.size());
}

inline double detection_reward(const SceneSpec& scene, const Grid& grid) {
  return detection_reward(scene, detect(grid));
}

// Fraction of non-empty cells with at least one identical 4-neighbor.
inline std::optional<double> compactness(const Grid& grid) {
  int filled = 0;
  int grouped = 0;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Cell& cell = grid.at(r, c);
      if (!cell.filled) continue;
      ++filled;
      const bool neighbor = (r > 0 && grid.at(r - 1, c) == cell) ||
                            (r + 1 < grid.height && grid.at(r + 1, c) == cell) ||
                            (c > 0 && grid.at(r, c - 1) == cell) ||
                            (c + 1 < grid.width && grid.at(r, c + 1) == cell);
      grouped += neighbor;
    }
  }
  if (filled == 0) return std::nullopt;
  return static_cast<double>(grouped) / filled;
}

// Preference score of `text` against `grid`. Unparseable or absent text has
// zero semantic score and demands no objects.
inline double hpm_score(const std::optional<TokenSeq>& text, const Grid& grid) {
  double semantic = 0.0;
  bool demands_objects = false;
  if (text) {
    try {
      const SceneSpec scene = extract_elements(*text);
      demands_objects = true;
      semantic = vqa_reward(grid, questions_for(scene, AnswerTarget::kImage));
    } catch (const MalformedPrompt&) {
    }
  }
  const auto compact = compactness(grid);
  const double aesthetic = compact ? *compact : (demands_objects ? 0.0 : 1.0);
  return kHpmSemanticWeight * semantic + kHpmAestheticWeight * aesthetic;
}

inline std::optional<TokenSeq> description_of(const ParsedReasoning& parsed) {
  if (!parsed.description) return std::nullopt;
  return parsed.description->tokens;
}

inline double semantic_projection_reward(const ParsedReasoning& parsed, const Grid& grid) {
  if (!parsed.description) return 0.0;
  return hpm_score(parsed.description->tokens, grid);
}

struct HolisticParts {
  double r_vqa = 0.0;
  double r_det = 0.0;
  double r_align = 0.0;
  double total() const { return r_vqa + r_det + r_align; }
};

inline HolisticParts holistic_parts(const Prompt& prompt, const Grid& grid) {
  const auto objects = detect(grid);
  HolisticParts h;
  h.r_vqa = vqa_reward(objects, questions_for(prompt.truth, AnswerTarget::kImage));
  h.r_det = detection_reward(prompt.truth, objects);
  h.r_align = hpm_score(prompt.surface, grid);
  return h;
}

inline double holistic_alignment_reward(const Prompt& prompt, const Grid& grid) {
  return holistic_parts(prompt, grid).total();
}

inline RewardBreakdown score_rollout(const Rollout& rollout, int height = kGridSide,
                                     int width = kGridSide) {
  RewardBreakdown b;
  const ParsedReasoning parsed = parse_reasoning(rollout.text);
  b.r_format = format_reward(parsed);
  b.r_prop = propagation_reward(description_of(parsed),
                                questions_for(rollout.prompt.truth, AnswerTarget::kText));
  b.r_sa = b.r_format + b.r_prop;
  const Grid grid = render(rollout.image, height, width);
  b.r_sp = semantic_projection_reward(parsed, grid);
  const HolisticParts h = holistic_parts(rollout.prompt, grid);
  b.r_vqa = h.r_vqa;
  b.r_det = h.r_det;
  b.r_align = h.r_align;
  b.r_ha = h.total();
  return b;
}

}  // namespace dogrpo
