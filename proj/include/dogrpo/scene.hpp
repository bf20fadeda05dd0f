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

// Toy prompt language and its ground truth.
//
// Grammar (whitespace-separated tokens):
//   sentence := object ( ("and" | RELATION) object ){0,2}
//   object   := "a" COLOR SHAPE | ("two" | "three") COLOR SHAPES
// A RELATION joins the object before it (subject) to the object after it.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dogrpo/common.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

struct ObjectSpec {
  int count = 1;
  Color color = Color::kRed;
  Shape shape = Shape::kCircle;

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct RelationSpec {
  int subject = 0;
  Relation relation = Relation::kLeftOf;
  int object = 1;

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  std::vector<RelationSpec> relations;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Prompt {
  TokenSeq surface;
  SceneSpec truth;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

enum class Difficulty : std::uint8_t { kSingle, kPair, kRelational };
inline constexpr std::array<Difficulty, 3> kAllDifficulties = {
    Difficulty::kSingle, Difficulty::kPair, Difficulty::kRelational};

inline std::string_view name(Difficulty d) {
  switch (d) {
    case Difficulty::kSingle: return "single";
    case Difficulty::kPair: return "pair";
    case Difficulty::kRelational: return "relational";
  }
  return "?";
}

inline Difficulty difficulty_from_name(std::string_view s) {
  for (Difficulty d : kAllDifficulties) {
    if (name(d) == s) return d;
  }
  throw InvalidConfig("unknown difficulty '" + std::string(s) + "'");
}

enum class QuestionKind : std::uint8_t { kColor, kCount, kRelation };
enum class AnswerTarget : std::uint8_t { kText, kImage };

// A derived question. `subject` is the object asked about; `object` is the
// second argument of a relation question (unused otherwise).
struct QAItem {
  TokenSeq question;
  Token reference_answer = Token::kRed;
  AnswerTarget target = AnswerTarget::kText;
  QuestionKind kind = QuestionKind::kColor;
  ObjectSpec subject;
  ObjectSpec object;
};

// Checks every SceneSpec invariant; returns an empty string when valid,
// otherwise a description of the first violation.
inline std::string scene_violation(const SceneSpec& scene) {
  const int n = static_cast<int>(scene.objects.size());
  if (n < 1 || n > 3) return "scene must have 1-3 objects";
  if (scene.relations.size() > 2) return "scene must have at most 2 relations";
  for (int i = 0; i < n; ++i) {
    const auto& o = scene.objects[i];
    if (o.count < 1 || o.count > 3) return "object count out of range";
    for (int j = 0; j < i; ++j) {
      if (scene.objects[j].color == o.color && scene.objects[j].shape == o.shape)
        return "duplicate (color, shape) pair";
    }
  }
  // Ordering constraints per axis: edge a -> b means a is strictly before b.
  std::vector<std::vector<int>> before_x(n, std::vector<int>(n, 0));
  std::vector<std::vector<int>> before_y(n, std::vector<int>(n, 0));
  for (std::size_t r = 0; r < scene.relations.size(); ++r) {
    const auto& rel = scene.relations[r];
    if (rel.subject < 0 || rel.subject >= n || rel.object < 0 || rel.object >= n)
      return "relation index out of range";
    if (rel.subject == rel.object) return "relation subject equals object";
    for (std::size_t q = 0; q < r; ++q) {
      if (scene.relations[q].subject == rel.subject && scene.relations[q].object == rel.object)
        return "more than one relation for an ordered pair";
    }
    switch (rel.relation) {
      case Relation::kLeftOf: before_x[rel.subject][rel.object] = 1; break;
      case Relation::kRightOf: before_x[rel.object][rel.subject] = 1; break;
      case Relation::kAbove: before_y[rel.subject][rel.object] = 1; break;
      case Relation::kBelow: before_y[rel.object][rel.subject] = 1; break;
    }
  }
  // Transitive closure; a cycle shows up as a self-loop.
  for (auto* g : {&before_x, &before_y}) {
    auto& m = *g;
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (m[i][k] && m[k][j]) m[i][j] = 1;
    for (int i = 0; i < n; ++i)
      if (m[i][i]) return "inconsistent relations";
  }
  return {};
}

inline bool is_valid(const SceneSpec& scene) { return scene_violation(scene).empty(); }

namespace detail {

inline void append_object_mention(TokenSeq& out, const ObjectSpec& o, bool with_article) {
  if (o.count == 1) {
    if (with_article) out.push_back(Token::kA);
  } else {
    out.push_back(count_token(o.count));
  }
  out.push_back(color_token(o.color));
  out.push_back(o.count == 1 ? shape_token(o.shape) : plural_token(o.shape));
}

inline const RelationSpec* relation_between(const SceneSpec& scene, int a, int b) {
  for (const auto& r : scene.relations) {
    if (r.subject == a && r.object == b) return &r;
  }
  return nullptr;
}

inline TokenSeq render_mentions(const SceneSpec& scene, bool with_article) {
  TokenSeq out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i > 0) {
      const auto* r = relation_between(scene, static_cast<int>(i) - 1, static_cast<int>(i));
      out.push_back(r ? relation_token(r->relation) : Token::kAnd);
    }
    append_object_mention(out, scene.objects[i], with_article);
  }
  return out;
}

}  // namespace detail

// Canonical surface form. Only defined for scenes whose relations link
// consecutive objects (subject i, object i+1), which is what the grammar and
// the generator produce.
inline TokenSeq surface_of(const SceneSpec& scene) {
  return detail::render_mentions(scene, /*with_article=*/true);
}

// Canonical thought content: the object mentions without articles.
inline TokenSeq canonical_thought(const SceneSpec& scene) {
  return detail::render_mentions(scene, /*with_article=*/false);
}

inline SceneSpec extract_elements(const TokenSeq& surface) {
  SceneSpec scene;
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> MalformedPrompt {
    return MalformedPrompt("malformed prompt '" + to_string(surface) + "': " + why);
  };
  auto parse_object = [&]() {
    if (pos + 3 > surface.size()) throw fail("truncated object mention");
    ObjectSpec o;
    const Token head = surface[pos];
    const auto color = as_color(surface[pos + 1]);
    const Token noun = surface[pos + 2];
    const auto shape = as_shape(noun);
    if (!color) throw fail("expected a color word");
    if (!shape) throw fail("expected a shape word");
    if (head == Token::kA) {
      if (is_plural_shape(noun)) throw fail("article with plural shape");
      o.count = 1;
    } else if (head == Token::kTwo || head == Token::kThree) {
      if (!is_plural_shape(noun)) throw fail("count with singular shape");
      o.count = *as_count(head);
    } else {
      throw fail("expected 'a', 'two' or 'three'");
    }
    o.color = *color;
    o.shape = *shape;
    scene.objects.push_back(o);
    pos += 3;
  };

  parse_object();
  while (pos < surface.size()) {
    if (scene.objects.size() == 3) throw fail("more than three objects");
    const Token joiner = surface[pos++];
    const auto rel = as_relation(joiner);
    if (!rel && joiner != Token::kAnd) throw fail("expected 'and' or a relation");
    parse_object();
    if (rel) {
      const int n = static_cast<int>(scene.objects.size());
      scene.relations.push_back({n - 2, *rel, n - 1});
    }
  }
  if (auto why = scene_violation(scene); !why.empty()) throw fail(why);
  return scene;
}

// Deterministic template expansion:
//   single:     "a {c} {s}" or "{two|three} {c} {s}s"
//   pair:       "{object} and {object}"
//   relational: "a {c} {s} {relation} a {c} {s}"
// Multi-object scenes use distinct shapes so shape-keyed questions are
// unambiguous.
inline Prompt generate_prompt(std::uint64_t seed, Difficulty difficulty) {
  Rng rng(derive_seed(seed, "prompt"));
  auto random_object = [&](int count) {
    ObjectSpec o;
    o.count = count;
    o.color = static_cast<Color>(rng.below(kNumColors));
    o.shape = static_cast<Shape>(rng.below(kNumShapes));
    return o;
  };
  auto second_object = [&](const ObjectSpec& first, int count) {
    ObjectSpec o = random_object(count);
    const int offset = 1 + static_cast<int>(rng.below(kNumShapes - 1));
    o.shape = static_cast<Shape>((static_cast<int>(first.shape) + offset) % kNumShapes);
    return o;
  };
  SceneSpec scene;
  switch (difficulty) {
    case Difficulty::kSingle:
      scene.objects.push_back(random_object(1 + static_cast<int>(rng.below(3))));
      break;
    case Difficulty::kPair: {
      const ObjectSpec first = random_object(1 + static_cast<int>(rng.below(3)));
      scene.objects.push_back(first);
      scene.objects.push_back(second_object(first, 1 + static_cast<int>(rng.below(3))));
      break;
    }
    case Difficulty::kRelational: {
      const ObjectSpec first = random_object(1);
      scene.objects.push_back(first);
      scene.objects.push_back(second_object(first, 1));
      scene.relations.push_back({0, static_cast<Relation>(rng.below(kNumRelations)), 1});
      break;
    }
  }
  return Prompt{surface_of(scene), scene};
}

inline Prompt prompt_from_surface(const TokenSeq& surface) {
  return Prompt{surface, extract_elements(surface)};
}

// One color and one count question per object, one relation question per
// relation; each emitted for the text target and then the image target.
inline std::vector<QAItem> derive_questions(const SceneSpec& scene) {
  std::vector<QAItem> out;
  auto emit_both = [&](QAItem item) {
    item.target = AnswerTarget::kText;
    out.push_back(item);
    item.target = AnswerTarget::kImage;
    out.push_back(std::move(item));
  };
  for (const auto& o : scene.objects) {
    QAItem color_q;
    color_q.kind = QuestionKind::kColor;
    color_q.subject = o;
    color_q.question = {Token::kWhat, Token::kColorWord, Token::kIs, Token::kThe,
                        shape_token(o.shape), Token::kQuestionMark};
    color_q.reference_answer = color_token(o.color);
    emit_both(color_q);

    QAItem count_q;
    count_q.kind = QuestionKind::kCount;
    count_q.subject = o;
    count_q.question = {Token::kHow, Token::kMany, plural_token(o.shape), Token::kQuestionMark};
    count_q.reference_answer = count_token(o.count);
    emit_both(count_q);
  }
  for (const auto& r : scene.relations) {
    QAItem rel_q;
    rel_q.kind = QuestionKind::kRelation;
    rel_q.subject = scene.objects[r.subject];
    rel_q.object = scene.objects[r.object];
    rel_q.question = {Token::kWhere, Token::kIs, Token::kThe,
                      shape_token(rel_q.subject.shape), Token::kRelative, Token::kTo,
                      Token::kThe, shape_token(rel_q.object.shape), Token::kQuestionMark};
    rel_q.reference_answer = relation_token(r.relation);
    emit_both(rel_q);
  }
  return out;
}

inline std::vector<QAItem> questions_for(const SceneSpec& scene, AnswerTarget target) {
  std::vector<QAItem> all = derive_questions(scene);
  std::erase_if(all, [&](const QAItem& q) { return q.target != target; });
  return all;
}

// Corpus records: one JSON object per line,
//   {"surface":"a red circle","truth":{"objects":[{"count":1,"color":"red",
//    "shape":"circle"}],"relations":[]}}

inline nlohmann::json scene_to_json(const SceneSpec& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"count", o.count}, {"color", name(o.color)}, {"shape", name(o.shape)}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : scene.relations) {
    relations.push_back(
        {{"subject", r.subject}, {"relation", name(r.relation)}, {"object", r.object}});
  }
  return {{"objects", objects}, {"relations", relations}};
}

namespace detail {

template <std::size_t N>
int index_of(const std::array<std::string_view, N>& names, const std::string& s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<int>(i);
  }
  throw MalformedPrompt("unknown word '" + s + "' in scene record");
}

}  // namespace detail

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec scene;
  for (const auto& o : j.at("objects")) {
    scene.objects.push_back(
        {o.at("count").get<int>(),
         static_cast<Color>(detail::index_of(kColorNames, o.at("color").get<std::string>())),
         static_cast<Shape>(detail::index_of(kShapeNames, o.at("shape").get<std::string>()))});
  }
  for (const auto& r : j.at("relations")) {
    scene.relations.push_back(
        {r.at("subject").get<int>(),
         static_cast<Relation>(
             detail::index_of(kRelationNames, r.at("relation").get<std::string>())),
         r.at("object").get<int>()});
  }
  return scene;
}

inline std::string prompt_to_record(const Prompt& p) {
  nlohmann::json j = {{"surface", to_string(p.surface)}, {"truth", scene_to_json(p.truth)}};
  return j.dump();
}

// Throws MalformedPrompt if the record is unparseable or its surface does not
// extract to its stated truth.
inline Prompt prompt_from_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPrompt(std::string("corpus record is not valid JSON: ") + e.what());
  }
  try {
    Prompt p{tokenize(j.at("surface").get<std::string>()), scene_from_json(j.at("truth"))};
    if (extract_elements(p.surface) != p.truth)
      throw MalformedPrompt("corpus record truth disagrees with its surface: " + line);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPrompt(std::string("corpus record is missing fields: ") + e.what());
  }
}

inline void write_corpus(const std::string& path, const std::vector<Prompt>& prompts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open corpus file for writing: " + path);
  for (const auto& p : prompts) out << prompt_to_record(p) << '\n';
  if (!out) throw IoFailure("failed writing corpus file: " + path);
}

inline std::vector<Prompt> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open corpus file: " + path);
  std::vector<Prompt> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(prompt_from_record(line));
  }
  return out;
}

}  // namespace dogrpo
