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

// Unified token space shared by text and image generation.
//
// Id layout (contiguous ranges, so every phase mask is a half-open range):
//   [0, 30)   text tokens: attribute words, fillers, END_TEXT
//   [30, 35)  control tokens: the four reasoning tags, then IMG_START
//   [35, 48)  image tokens: EMPTY then the 12 (shape, color) cells
//   48        PAD, used only to left-fill context windows

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dogrpo/common.hpp"

namespace dogrpo {

enum class Color : std::uint8_t { kRed, kGreen, kBlue, kYellow };
enum class Shape : std::uint8_t { kCircle, kSquare, kTriangle };
enum class Relation : std::uint8_t { kLeftOf, kRightOf, kAbove, kBelow };

inline constexpr int kNumColors = 4;
inline constexpr int kNumShapes = 3;
inline constexpr int kNumRelations = 4;

enum class Token : std::uint8_t {
  // colors
  kRed, kGreen, kBlue, kYellow,
  // shapes, singular then plural
  kCircle, kSquare, kTriangle,
  kCircles, kSquares, kTriangles,
  // counts
  kOne, kTwo, kThree,
  // relations
  kLeftOf, kRightOf, kAbove, kBelow,
  // fillers and punctuation
  kA, kAnd, kThe, kWhat, kColorWord, kIs, kHow, kMany, kWhere, kRelative,
  kTo, kQuestionMark,
  kEndText,
  // control
  kThoughtOpen, kThoughtClose, kDescOpen, kDescClose, kImgStart,
  // image cells
  kImgEmpty,
  kImgFirstCell,
  kImgLastCell = kImgFirstCell + kNumShapes * kNumColors - 1,
  kPad,
};

using TokenSeq = std::vector<Token>;

inline constexpr int kVocabSize = static_cast<int>(Token::kPad) + 1;
inline constexpr int kTextBegin = 0;
inline constexpr int kTextEnd = static_cast<int>(Token::kThoughtOpen);
inline constexpr int kControlBegin = kTextEnd;
inline constexpr int kControlEnd = static_cast<int>(Token::kImgEmpty);
inline constexpr int kImageBegin = kControlEnd;
inline constexpr int kImageEnd = static_cast<int>(Token::kPad);
inline constexpr int kNumImageTokens = kImageEnd - kImageBegin;

static_assert(kTextEnd == 30);
static_assert(kNumImageTokens == 13);
static_assert(kVocabSize == 49);

constexpr int id(Token t) { return static_cast<int>(t); }
constexpr Token token_at(int id) { return static_cast<Token>(id); }

constexpr bool is_text(Token t) { return id(t) >= kTextBegin && id(t) < kTextEnd; }
constexpr bool is_control(Token t) {
  return id(t) >= kControlBegin && id(t) < kControlEnd;
}
constexpr bool is_image(Token t) {
  return id(t) >= kImageBegin && id(t) < kImageEnd;
}

enum class Phase : std::uint8_t { kText, kImage };

// Half-open id range of tokens a phase may emit. Text admits text and control
// tokens except IMG_START, which is appended by the sampler rather than drawn.
struct TokenRange {
  int begin;
  int end;

  constexpr bool contains(Token t) const { return id(t) >= begin && id(t) < end; }
  constexpr int size() const { return end - begin; }
};

constexpr TokenRange phase_mask(Phase phase) {
  return phase == Phase::kText ? TokenRange{kTextBegin, id(Token::kImgStart)}
                               : TokenRange{kImageBegin, kImageEnd};
}

// Word-level helpers.
constexpr Token color_token(Color c) { return token_at(id(Token::kRed) + static_cast<int>(c)); }
constexpr Token shape_token(Shape s) { return token_at(id(Token::kCircle) + static_cast<int>(s)); }
constexpr Token plural_token(Shape s) { return token_at(id(Token::kCircles) + static_cast<int>(s)); }
constexpr Token relation_token(Relation r) {
  return token_at(id(Token::kLeftOf) + static_cast<int>(r));
}
constexpr Token count_token(int count) { return token_at(id(Token::kOne) + count - 1); }

constexpr std::optional<Color> as_color(Token t) {
  if (id(t) >= id(Token::kRed) && id(t) <= id(Token::kYellow))
    return static_cast<Color>(id(t) - id(Token::kRed));
  return std::nullopt;
}

// Singular or plural shape word.
constexpr std::optional<Shape> as_shape(Token t) {
  if (id(t) >= id(Token::kCircle) && id(t) <= id(Token::kTriangle))
    return static_cast<Shape>(id(t) - id(Token::kCircle));
  if (id(t) >= id(Token::kCircles) && id(t) <= id(Token::kTriangles))
    return static_cast<Shape>(id(t) - id(Token::kCircles));
  return std::nullopt;
}

constexpr bool is_plural_shape(Token t) {
  return id(t) >= id(Token::kCircles) && id(t) <= id(Token::kTriangles);
}

constexpr std::optional<Relation> as_relation(Token t) {
  if (id(t) >= id(Token::kLeftOf) && id(t) <= id(Token::kBelow))
    return static_cast<Relation>(id(t) - id(Token::kLeftOf));
  return std::nullopt;
}

constexpr std::optional<int> as_count(Token t) {
  if (id(t) >= id(Token::kOne) && id(t) <= id(Token::kThree)) return id(t) - id(Token::kOne) + 1;
  return std::nullopt;
}

// Content of one grid cell: empty, or a (shape, color) pair.
struct Cell {
  bool filled = false;
  Shape shape = Shape::kCircle;
  Color color = Color::kRed;

  static constexpr Cell empty() { return {}; }
  static constexpr Cell of(Shape s, Color c) { return {true, s, c}; }

  friend constexpr bool operator==(const Cell& a, const Cell& b) {
    return a.filled == b.filled && (!a.filled || (a.shape == b.shape && a.color == b.color));
  }
};

constexpr Token image_token(Cell cell) {
  if (!cell.filled) return Token::kImgEmpty;
  return token_at(id(Token::kImgFirstCell) + static_cast<int>(cell.shape) * kNumColors +
                  static_cast<int>(cell.color));
}

// Precondition: is_image(t).
constexpr Cell cell_of(Token t) {
  if (t == Token::kImgEmpty) return Cell::empty();
  const int k = id(t) - id(Token::kImgFirstCell);
  return Cell::of(static_cast<Shape>(k / kNumColors), static_cast<Color>(k % kNumColors));
}

inline constexpr std::array<std::string_view, kNumColors> kColorNames = {"red", "green", "blue",
                                                                         "yellow"};
inline constexpr std::array<std::string_view, kNumShapes> kShapeNames = {"circle", "square",
                                                                         "triangle"};
inline constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "left-of", "right-of", "above", "below"};

inline std::string_view name(Color c) { return kColorNames[static_cast<int>(c)]; }
inline std::string_view name(Shape s) { return kShapeNames[static_cast<int>(s)]; }
inline std::string_view name(Relation r) { return kRelationNames[static_cast<int>(r)]; }

namespace detail {

inline const std::array<std::string, kVocabSize>& token_names() {
  static const std::array<std::string, kVocabSize> names = [] {
    std::array<std::string, kVocabSize> n{};
    const char* words[] = {"red",      "green",    "blue",      "yellow",   "circle",
                           "square",   "triangle", "circles",   "squares",  "triangles",
                           "one",      "two",      "three",     "left-of",  "right-of",
                           "above",    "below",    "a",         "and",      "the",
                           "what",     "color",    "is",        "how",      "many",
                           "where",    "relative", "to",        "?",        "<end_text>",
                           "<thought>", "</thought>", "<description>", "</description>",
                           "<img_start>"};
    int i = 0;
    for (const char* w : words) n[i++] = w;
    n[id(Token::kImgEmpty)] = "img:empty";
    for (int s = 0; s < kNumShapes; ++s) {
      for (int c = 0; c < kNumColors; ++c) {
        const Token t = image_token(Cell::of(static_cast<Shape>(s), static_cast<Color>(c)));
        n[id(t)] = "img:" + std::string(kColorNames[c]) + "-" + std::string(kShapeNames[s]);
      }
    }
    n[id(Token::kPad)] = "<pad>";
    return n;
  }();
  return names;
}

}  // namespace detail

inline const std::string& token_name(Token t) { return detail::token_names()[id(t)]; }

inline std::optional<Token> token_from_name(std::string_view word) {
  const auto& names = detail::token_names();
  for (int i = 0; i < kVocabSize; ++i) {
    if (names[i] == word) return token_at(i);
  }
  return std::nullopt;
}

// Space-joined token names.
inline std::string to_string(const TokenSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += token_name(seq[i]);
  }
  return out;
}

// Whitespace tokenizer over exact token names. A trailing '?' glued to a word
// is split off. Throws MalformedPrompt on unknown words.
inline TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    bool question = false;
    if (word.size() > 1 && word.back() == '?') {
      word.pop_back();
      question = true;
    }
    auto t = token_from_name(word);
    if (!t) throw MalformedPrompt("unknown token '" + word + "'");
    out.push_back(*t);
    if (question) out.push_back(Token::kQuestionMark);
  }
  return out;
}

// Canonical vocabulary listing: one "<id> <name>" line per token.
inline std::string serialize_vocab() {
  std::string out;
  for (int i = 0; i < kVocabSize; ++i) {
    out += std::to_string(i);
    out += ' ';
    out += detail::token_names()[i];
    out += '\n';
  }
  return out;
}

// Throws VocabMismatch unless `text` is exactly this vocabulary's listing
// (modulo trailing whitespace per line).
inline void check_vocab_listing(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    int got_id = -1;
    std::string got_name;
    fields >> got_id >> got_name;
    if (expected >= kVocabSize || got_id != expected ||
        got_name != detail::token_names()[expected]) {
      throw VocabMismatch("vocabulary line " + std::to_string(expected) + " differs: '" + line +
                          "'");
    }
    ++expected;
  }
  if (expected != kVocabSize) throw VocabMismatch("vocabulary listing is truncated");
}

inline std::uint64_t vocab_hash() { return fnv1a(serialize_vocab()); }

}  // namespace dogrpo
