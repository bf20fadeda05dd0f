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

#include <gtest/gtest.h>

#include "dogrpo/scene.hpp"

namespace dogrpo {
namespace {

TEST(GeneratePrompt, SingleSeedSeven) {
  const Prompt p = generate_prompt(7, Difficulty::kSingle);
  ASSERT_EQ(p.truth.objects.size(), 1u);
  EXPECT_TRUE(p.truth.relations.empty());
  EXPECT_EQ(extract_elements(p.surface), p.truth);
  std::cout << "seed 7 single: " << to_string(p.surface) << '\n';
}

TEST(GeneratePrompt, RelationalSeedZeroHasOneRelation) {
  const Prompt p = generate_prompt(0, Difficulty::kRelational);
  EXPECT_EQ(p.truth.objects.size(), 2u);
  EXPECT_EQ(p.truth.relations.size(), 1u);
}

TEST(GeneratePrompt, ContractsHoldOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    for (Difficulty d : kAllDifficulties) {
      const Prompt p = generate_prompt(seed, d);
      EXPECT_EQ(scene_violation(p.truth), "") << to_string(p.surface);
      EXPECT_EQ(extract_elements(p.surface), p.truth) << to_string(p.surface);
      EXPECT_EQ(generate_prompt(seed, d), p);
      if (d == Difficulty::kPair) {
        ASSERT_EQ(p.truth.objects.size(), 2u);
        const auto& a = p.truth.objects[0];
        const auto& b = p.truth.objects[1];
        EXPECT_FALSE(a.color == b.color && a.shape == b.shape);
      }
    }
  }
}

TEST(ExtractElements, RelationalSentence) {
  const SceneSpec s = extract_elements(tokenize("a red circle left-of a blue square"));
  ASSERT_EQ(s.objects.size(), 2u);
  EXPECT_EQ(s.objects[0], (ObjectSpec{1, Color::kRed, Shape::kCircle}));
  EXPECT_EQ(s.objects[1], (ObjectSpec{1, Color::kBlue, Shape::kSquare}));
  ASSERT_EQ(s.relations.size(), 1u);
  EXPECT_EQ(s.relations[0], (RelationSpec{0, Relation::kLeftOf, 1}));
}

TEST(ExtractElements, PluralObject) {
  const SceneSpec s = extract_elements(tokenize("two green triangles"));
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0], (ObjectSpec{2, Color::kGreen, Shape::kTriangle}));
  EXPECT_TRUE(s.relations.empty());
}

TEST(ExtractElements, RejectsUngrammatical) {
  EXPECT_THROW(extract_elements(tokenize("circle red a")), MalformedPrompt);
  EXPECT_THROW(extract_elements(tokenize("a red circles")), MalformedPrompt);
  EXPECT_THROW(extract_elements(tokenize("two red circle")), MalformedPrompt);
  EXPECT_THROW(extract_elements(tokenize("a red circle and")), MalformedPrompt);
  EXPECT_THROW(extract_elements({}), MalformedPrompt);
}

TEST(ExtractElements, RejectsContradictoryRelations) {
  EXPECT_THROW(extract_elements(tokenize("a red circle a red circle")), MalformedPrompt);
}

TEST(SceneViolation, CatchesInvariantBreaches) {
  SceneSpec s;
  EXPECT_NE(scene_violation(s), "");
  s.objects = {{4, Color::kRed, Shape::kCircle}};
  EXPECT_NE(scene_violation(s), "");
  s.objects = {{1, Color::kRed, Shape::kCircle}, {1, Color::kRed, Shape::kCircle}};
  EXPECT_NE(scene_violation(s), "");
  s.objects = {{1, Color::kRed, Shape::kCircle}, {1, Color::kBlue, Shape::kSquare},
               {1, Color::kGreen, Shape::kTriangle}};
  s.relations = {{0, Relation::kLeftOf, 1}, {1, Relation::kLeftOf, 2}};
  EXPECT_EQ(scene_violation(s), "");
  s.relations = {{0, Relation::kLeftOf, 1}, {1, Relation::kRightOf, 0}};
  EXPECT_EQ(scene_violation(s), "");
  s.relations = {{0, Relation::kLeftOf, 1}, {1, Relation::kLeftOf, 0}};
  EXPECT_NE(scene_violation(s), "");
  s.relations = {{0, Relation::kLeftOf, 1}, {0, Relation::kAbove, 1}};
  EXPECT_NE(scene_violation(s), "");
  s.relations = {{0, Relation::kLeftOf, 0}};
  EXPECT_NE(scene_violation(s), "");
}

TEST(DeriveQuestions, SingleObject) {
  const SceneSpec s{{{1, Color::kRed, Shape::kCircle}}, {}};
  const auto qs = derive_questions(s);
  ASSERT_EQ(qs.size(), 4u);
  EXPECT_EQ(to_string(qs[0].question), "what color is the circle ?");
  EXPECT_EQ(qs[0].reference_answer, Token::kRed);
  EXPECT_EQ(to_string(qs[2].question), "how many circles ?");
  EXPECT_EQ(qs[2].reference_answer, Token::kOne);
  EXPECT_EQ(qs[0].target, AnswerTarget::kText);
  EXPECT_EQ(qs[1].target, AnswerTarget::kImage);
  for (const auto& q : qs) EXPECT_NE(q.kind, QuestionKind::kRelation);
}

TEST(DeriveQuestions, RelationQuestion) {
  const SceneSpec s = extract_elements(tokenize("a red circle left-of a blue square"));
  const auto qs = derive_questions(s);
  ASSERT_EQ(qs.size(), 10u);
  EXPECT_EQ(to_string(qs[8].question), "where is the circle relative to the square ?");
  EXPECT_EQ(qs[8].reference_answer, Token::kLeftOf);
  EXPECT_EQ(qs[9].kind, QuestionKind::kRelation);
}

TEST(DeriveQuestions, CountFormulaOverGeneratedScenes) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (Difficulty d : kAllDifficulties) {
      const SceneSpec s = generate_prompt(seed, d).truth;
      const auto qs = derive_questions(s);
      EXPECT_EQ(qs.size(), 2 * (2 * s.objects.size() + s.relations.size()));
      EXPECT_EQ(questions_for(s, AnswerTarget::kText).size(), qs.size() / 2);
    }
  }
}

TEST(Corpus, RoundTripThroughFile) {
  std::vector<Prompt> prompts;
  for (std::uint64_t seed = 0; seed < 30; ++seed)
    prompts.push_back(generate_prompt(seed, kAllDifficulties[seed % 3]));
  const auto path = std::filesystem::temp_directory_path() / "dogrpo_corpus_test.jsonl";
  write_corpus(path.string(), prompts);
  EXPECT_EQ(read_corpus(path.string()), prompts);
  std::filesystem::remove(path);
}

TEST(Corpus, RejectsInconsistentRecord) {
  EXPECT_THROW(prompt_from_record(R"({"surface":"a red circle","truth":{"objects":)"
                                  R"([{"count":2,"color":"red","shape":"circle"}],"relations":[]}})"),
               MalformedPrompt);
  EXPECT_THROW(prompt_from_record("not json"), MalformedPrompt);
  EXPECT_THROW(read_corpus("/nonexistent/dir/corpus.jsonl"), IoFailure);
}

}  // namespace
}  // namespace dogrpo
