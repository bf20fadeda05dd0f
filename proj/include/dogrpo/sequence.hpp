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

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dogrpo/scene.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

inline constexpr int kGridSide = 6;
inline constexpr int kImageLength = kGridSide * kGridSide;  // M
inline constexpr int kMaxTextLength = 48;                   // L_max

// One sampled response o = (s, t). Log-probabilities are those of the
// sampling policy (pi_old) for each emitted token.
struct Rollout {
  Prompt prompt;
  TokenSeq text;
  TokenSeq image;
  std::vector<double> logp_old_text;
  std::vector<double> logp_old_image;
};

// Returns an empty string when the rollout satisfies its token-range
// invariants for an image of `image_length` tokens.
inline std::string rollout_violation(const Rollout& r, int image_length = kImageLength) {
  if (static_cast<int>(r.image.size()) != image_length) return "image length mismatch";
  for (Token t : r.image)
    if (!is_image(t)) return "non-image token in image sequence";
  for (Token t : r.text)
    if (!is_text(t) && !is_control(t)) return "non-text token in text sequence";
  if (r.logp_old_text.size() != r.text.size() || r.logp_old_image.size() != r.image.size())
    return "log-probability length mismatch";
  for (const auto* v : {&r.logp_old_text, &r.logp_old_image})
    for (double lp : *v)
      if (!std::isfinite(lp) || lp > 0.0) return "log-probability not finite and <= 0";
  return {};
}

struct TokenSpan {
  std::size_t begin = 0;  // first content token
  std::size_t end = 0;    // one past the last content token
  TokenSeq tokens;
};

struct ParsedReasoning {
  std::optional<TokenSpan> thought;
  std::optional<TokenSpan> description;
};

namespace detail {

// First open tag at or after `from`, closed by the next matching close tag.
// Empty or unclosed spans are absent.
inline std::optional<TokenSpan> first_span(const TokenSeq& seq, std::size_t from, Token open,
                                           Token close) {
  std::size_t i = from;
  while (i < seq.size() && seq[i] != open) ++i;
  if (i == seq.size()) return std::nullopt;
  std::size_t j = i + 1;
  while (j < seq.size() && seq[j] != close) ++j;
  if (j == seq.size() || j == i + 1) return std::nullopt;
  return TokenSpan{i + 1, j, TokenSeq(seq.begin() + static_cast<std::ptrdiff_t>(i + 1),
                                      seq.begin() + static_cast<std::ptrdiff_t>(j))};
}

}  // namespace detail

inline ParsedReasoning parse_reasoning(const TokenSeq& text) {
  ParsedReasoning out;
  out.thought = detail::first_span(text, 0, Token::kThoughtOpen, Token::kThoughtClose);
  const std::size_t desc_from = out.thought ? out.thought->end + 1 : 0;
  out.description = detail::first_span(text, desc_from, Token::kDescOpen, Token::kDescClose);
  return out;
}

// Canonical tagged form of the present spans, terminated by END_TEXT.
inline TokenSeq emit_reasoning(const ParsedReasoning& parsed) {
  TokenSeq out;
  if (parsed.thought) {
    out.push_back(Token::kThoughtOpen);
    out.insert(out.end(), parsed.thought->tokens.begin(), parsed.thought->tokens.end());
    out.push_back(Token::kThoughtClose);
  }
  if (parsed.description) {
    out.push_back(Token::kDescOpen);
    out.insert(out.end(), parsed.description->tokens.begin(), parsed.description->tokens.end());
    out.push_back(Token::kDescClose);
  }
  out.push_back(Token::kEndText);
  return out;
}

inline TokenSeq tagged_reasoning(const TokenSeq& thought, const TokenSeq& description) {
  ParsedReasoning p;
  p.thought = TokenSpan{0, 0, thought};
  p.description = TokenSpan{0, 0, description};
  return emit_reasoning(p);
}

}  // namespace dogrpo
