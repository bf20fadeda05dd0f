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

// Tiny autoregressive policy over the unified token space.
//
// The next-token distribution is a function of the last `context` tokens of
//   prompt ++ text ++ <img_start> ++ image
// (left-padded with PAD): concatenated embeddings -> tanh hidden layer ->
// output layer, with tokens outside the phase mask excluded from the softmax.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dogrpo/common.hpp"
#include "dogrpo/scene.hpp"
#include "dogrpo/sequence.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

struct PolicyDims {
  int context = 12;  // k
  int embed = 16;    // E
  int hidden = 64;   // H

  friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

// Parameter vector theta. Flat layout, in order:
//   token_embedding  [V x E]    row-major, row = token id
//   hidden_weights   [k*E x H]  row-major, row = context slot * E + embed dim
//   hidden_bias      [H]
//   output_weights   [H x V]    row-major
//   output_bias      [V]
class PolicyParams {
 public:
  PolicyParams() : PolicyParams(PolicyDims{}) {}

  explicit PolicyParams(PolicyDims dims) : dims_(dims), data_(flat_size(dims), 0.0) {}

  // Entries uniform in [-scale, scale].
  static PolicyParams random_uniform(PolicyDims dims, std::uint64_t seed, double scale = 0.05) {
    PolicyParams p(dims);
    Rng rng(seed);
    for (double& v : p.data_) v = rng.uniform(-scale, scale);
    return p;
  }

  static std::size_t flat_size(PolicyDims d) {
    const std::size_t v = kVocabSize;
    const std::size_t e = d.embed, h = d.hidden, k = d.context;
    return v * e + k * e * h + h + h * v + v;
  }

  const PolicyDims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  std::size_t embedding_offset() const { return 0; }
  std::size_t hidden_weights_offset() const {
    return embedding_offset() + static_cast<std::size_t>(kVocabSize * dims_.embed);
  }
  std::size_t hidden_bias_offset() const {
    return hidden_weights_offset() +
           static_cast<std::size_t>(dims_.context * dims_.embed * dims_.hidden);
  }
  std::size_t output_weights_offset() const {
    return hidden_bias_offset() + static_cast<std::size_t>(dims_.hidden);
  }
  std::size_t output_bias_offset() const {
    return output_weights_offset() + static_cast<std::size_t>(dims_.hidden * kVocabSize);
  }

  const double* embedding() const { return data_.data() + embedding_offset(); }
  const double* hidden_weights() const { return data_.data() + hidden_weights_offset(); }
  const double* hidden_bias() const { return data_.data() + hidden_bias_offset(); }
  const double* output_weights() const { return data_.data() + output_weights_offset(); }
  const double* output_bias() const { return data_.data() + output_bias_offset(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  PolicyDims dims_;
  std::vector<double> data_;
};

// pi_theta, pi_old and the frozen pi_ref.
class PolicyBundle {
 public:
  explicit PolicyBundle(const PolicyParams& init) : current(init), old(init), reference_(init) {}

  PolicyParams current;
  PolicyParams old;

  const PolicyParams& reference() const { return reference_; }

  void refresh_old() { old = current; }

 private:
  PolicyParams reference_;
};

// Per-token log-probabilities of a rollout's text and image tokens.
struct SequenceLogprobs {
  std::vector<double> text;
  std::vector<double> image;
};

// Activations of one next-token evaluation, kept for the backward pass.
struct TokenTrace {
  std::vector<Token> context;
  std::vector<double> hidden;   // tanh activations
  std::vector<double> logp;     // over the phase's admissible range
  TokenRange range{0, 0};
};

// Hidden-layer contribution of every (context slot, token) pair:
//   table[(c * V + v) * H + h] = sum_e embedding[v][e] * hidden_weights[c * E + e][h]
// Built once per parameter version, it turns the k*E*H input product of each
// forward pass into k*H additions.
class SlotProjection {
 public:
  explicit SlotProjection(const PolicyParams& params)
      : hidden_(params.dims().hidden),
        table_(static_cast<std::size_t>(params.dims().context * kVocabSize * params.dims().hidden),
               0.0) {
    const PolicyDims& d = params.dims();
    const int E = d.embed;
    const int H = d.hidden;
    const double* emb = params.embedding();
    const double* w1 = params.hidden_weights();
    for (int c = 0; c < d.context; ++c) {
      for (int v = 0; v < kVocabSize; ++v) {
        double* out = table_.data() + static_cast<std::size_t>((c * kVocabSize + v) * H);
        for (int e = 0; e < E; ++e) {
          const double x = emb[v * E + e];
          const double* w = w1 + static_cast<std::size_t>((c * E + e) * H);
          for (int h = 0; h < H; ++h) out[h] += x * w[h];
        }
      }
    }
  }

  const double* at(int slot, Token t) const {
    return table_.data() + static_cast<std::size_t>((slot * kVocabSize + id(t)) * hidden_);
  }

 private:
  int hidden_;
  std::vector<double> table_;
};

namespace detail {

inline void forward(const PolicyParams& params, const SlotProjection& proj,
                    std::span<const Token> context, Phase phase, TokenTrace& trace) {
  const PolicyDims& d = params.dims();
  const int H = d.hidden;
  trace.context.assign(context.begin(), context.end());
  trace.range = phase_mask(phase);
  trace.hidden.assign(params.hidden_bias(), params.hidden_bias() + H);
  double* a = trace.hidden.data();
  for (int c = 0; c < d.context; ++c) {
    const double* row = proj.at(c, context[static_cast<std::size_t>(c)]);
    for (int h = 0; h < H; ++h) a[h] += row[h];
  }
  for (int h = 0; h < H; ++h) a[h] = std::tanh(a[h]);

  const int lo = trace.range.begin;
  const int n = trace.range.size();
  trace.logp.assign(params.output_bias() + lo, params.output_bias() + lo + n);
  double* l = trace.logp.data();
  const double* w2 = params.output_weights();
  for (int h = 0; h < H; ++h) {
    const double z = a[h];
    const double* w = w2 + static_cast<std::size_t>(h * kVocabSize + lo);
    for (int v = 0; v < n; ++v) l[v] += z * w[v];
  }
  const double m = *std::max_element(l, l + n);
  double s = 0.0;
  for (int v = 0; v < n; ++v) s += std::exp(l[v] - m);
  const double lse = m + std::log(s);
  for (int v = 0; v < n; ++v) l[v] -= lse;
}

// Adjoints of the hidden pre-activation, summed per (context slot, token).
// The input layer's gradient is linear in these sums, so it is expanded once
// per backward sweep rather than once per scored token.
class SlotAdjoint {
 public:
  explicit SlotAdjoint(const PolicyDims& d)
      : dims_(d),
        sums_(static_cast<std::size_t>(d.context * kVocabSize * d.hidden), 0.0),
        touched_(static_cast<std::size_t>(d.context * kVocabSize), 0) {}

  void add(int slot, Token t, const double* da) {
    const int key = slot * kVocabSize + id(t);
    touched_[static_cast<std::size_t>(key)] = 1;
    double* g = sums_.data() + static_cast<std::size_t>(key * dims_.hidden);
    for (int h = 0; h < dims_.hidden; ++h) g[h] += da[h];
  }

  // Adds the embedding and hidden-weight gradients into grad.
  void expand(const PolicyParams& params, std::span<double> grad) const {
    const int E = dims_.embed;
    const int H = dims_.hidden;
    const double* emb = params.embedding();
    const double* w1 = params.hidden_weights();
    double* g_emb = grad.data() + params.embedding_offset();
    double* g_hw = grad.data() + params.hidden_weights_offset();
    for (int c = 0; c < dims_.context; ++c) {
      for (int v = 0; v < kVocabSize; ++v) {
        const int key = c * kVocabSize + v;
        if (!touched_[static_cast<std::size_t>(key)]) continue;
        const double* da = sums_.data() + static_cast<std::size_t>(key * H);
        for (int e = 0; e < E; ++e) {
          const double x = emb[v * E + e];
          const std::size_t off = static_cast<std::size_t>((c * E + e) * H);
          double* g = g_hw + off;
          const double* w = w1 + off;
          double dx = 0.0;
          for (int h = 0; h < H; ++h) {
            g[h] += x * da[h];
            dx += w[h] * da[h];
          }
          g_emb[v * E + e] += dx;
        }
      }
    }
  }

 private:
  PolicyDims dims_;
  std::vector<double> sums_;
  std::vector<char> touched_;
};

// Accumulates weight * d(log p(token))/d(theta) into grad for the output and
// hidden-bias blocks, and into `slots` for the input layer.
inline void backward(const PolicyParams& params, const TokenTrace& trace, Token token,
                     double weight, std::span<double> grad, SlotAdjoint& slots,
                     std::vector<double>& scratch) {
  const PolicyDims& d = params.dims();
  const int H = d.hidden;
  const int lo = trace.range.begin;
  const int n = trace.range.size();
  const int target = id(token) - lo;

  scratch.assign(static_cast<std::size_t>(n + 2 * H), 0.0);
  double* dl = scratch.data();
  double* dz = dl + n;
  double* da = dz + H;
  for (int v = 0; v < n; ++v) dl[v] = -weight * std::exp(trace.logp[static_cast<std::size_t>(v)]);
  dl[target] += weight;

  double* g_ob = grad.data() + params.output_bias_offset();
  for (int v = 0; v < n; ++v) g_ob[lo + v] += dl[v];
  double* g_ow = grad.data() + params.output_weights_offset();
  const double* w2 = params.output_weights();
  for (int h = 0; h < H; ++h) {
    const double z = trace.hidden[static_cast<std::size_t>(h)];
    double* g = g_ow + static_cast<std::size_t>(h * kVocabSize + lo);
    const double* w = w2 + static_cast<std::size_t>(h * kVocabSize + lo);
    double acc = 0.0;
    for (int v = 0; v < n; ++v) {
      g[v] += z * dl[v];
      acc += w[v] * dl[v];
    }
    dz[h] = acc;
  }
  for (int h = 0; h < H; ++h) {
    const double z = trace.hidden[static_cast<std::size_t>(h)];
    da[h] = dz[h] * (1.0 - z * z);
  }
  double* g_hb = grad.data() + params.hidden_bias_offset();
  for (int h = 0; h < H; ++h) g_hb[h] += da[h];
  for (int c = 0; c < d.context; ++c) slots.add(c, trace.context[static_cast<std::size_t>(c)], da);
}

}  // namespace detail

// The last `k` tokens of seq[0, end), left-padded with PAD.
inline std::vector<Token> context_window(std::span<const Token> seq, std::size_t end, int k) {
  std::vector<Token> out(static_cast<std::size_t>(k), Token::kPad);
  const std::size_t take = std::min<std::size_t>(end, static_cast<std::size_t>(k));
  std::copy(seq.begin() + static_cast<std::ptrdiff_t>(end - take),
            seq.begin() + static_cast<std::ptrdiff_t>(end), out.end() - static_cast<std::ptrdiff_t>(take));
  return out;
}

// prompt ++ text ++ <img_start> ++ image
inline TokenSeq full_sequence(const Rollout& r) {
  TokenSeq seq = r.prompt.surface;
  seq.insert(seq.end(), r.text.begin(), r.text.end());
  seq.push_back(Token::kImgStart);
  seq.insert(seq.end(), r.image.begin(), r.image.end());
  return seq;
}

// Next-token distribution over the whole vocabulary; masked entries are 0.
inline std::vector<double> next_token_probs(const PolicyParams& params,
                                            std::span<const Token> context, Phase phase) {
  TokenTrace trace;
  detail::forward(params, SlotProjection(params), context, phase, trace);
  std::vector<double> probs(kVocabSize, 0.0);
  for (int v = 0; v < trace.range.size(); ++v)
    probs[static_cast<std::size_t>(trace.range.begin + v)] = std::exp(trace.logp[static_cast<std::size_t>(v)]);
  return probs;
}

// Visits every scored position of a rollout in order (text first), calling
// fn(phase, index_within_phase, token, context).
template <typename Fn>
void for_each_position(const Rollout& r, int k, Fn&& fn) {
  const TokenSeq seq = full_sequence(r);
  const std::size_t p = r.prompt.surface.size();
  for (std::size_t j = 0; j < r.text.size(); ++j)
    fn(Phase::kText, j, r.text[j], context_window(seq, p + j, k));
  const std::size_t img0 = p + r.text.size() + 1;
  for (std::size_t j = 0; j < r.image.size(); ++j)
    fn(Phase::kImage, j, r.image[j], context_window(seq, img0 + j, k));
}

inline SequenceLogprobs logprob_eval(const PolicyParams& params, const SlotProjection& proj,
                                     const Rollout& r) {
  SequenceLogprobs out;
  out.text.resize(r.text.size());
  out.image.resize(r.image.size());
  TokenTrace trace;
  for_each_position(r, params.dims().context,
                    [&](Phase phase, std::size_t j, Token tok, const std::vector<Token>& ctx) {
                      detail::forward(params, proj, ctx, phase, trace);
                      const double lp = trace.logp[static_cast<std::size_t>(id(tok) - trace.range.begin)];
                      (phase == Phase::kText ? out.text : out.image)[j] = lp;
                    });
  return out;
}

inline SequenceLogprobs logprob_eval(const PolicyParams& params, const Rollout& r) {
  return logprob_eval(params, SlotProjection(params), r);
}

enum class Decoding : std::uint8_t { kSample, kGreedy };

// Generates one response: text until END_TEXT or L_max, then IMG_START, then
// exactly `image_length` image tokens.
inline Rollout decode(const PolicyParams& params, const SlotProjection& proj, const Prompt& prompt,
                      Rng& rng, Decoding mode, int image_length = kImageLength) {
  Rollout r;
  r.prompt = prompt;
  TokenSeq seq = prompt.surface;
  const int k = params.dims().context;
  TokenTrace trace;
  auto step = [&](Phase phase) {
    detail::forward(params, proj, context_window(seq, seq.size(), k), phase, trace);
    const int n = trace.range.size();
    int pick = 0;
    if (mode == Decoding::kGreedy) {
      pick = static_cast<int>(std::max_element(trace.logp.begin(), trace.logp.end()) - trace.logp.begin());
    } else {
      const double u = rng.uniform();
      double cum = 0.0;
      pick = n - 1;
      for (int v = 0; v < n; ++v) {
        cum += std::exp(trace.logp[static_cast<std::size_t>(v)]);
        if (u < cum) {
          pick = v;
          break;
        }
      }
    }
    const Token tok = token_at(trace.range.begin + pick);
    seq.push_back(tok);
    return std::pair{tok, trace.logp[static_cast<std::size_t>(pick)]};
  };
  while (static_cast<int>(r.text.size()) < kMaxTextLength) {
    const auto [tok, lp] = step(Phase::kText);
    r.text.push_back(tok);
    r.logp_old_text.push_back(lp);
    if (tok == Token::kEndText) break;
  }
  seq.push_back(Token::kImgStart);
  for (int j = 0; j < image_length; ++j) {
    const auto [tok, lp] = step(Phase::kImage);
    r.image.push_back(tok);
    r.logp_old_image.push_back(lp);
  }
  return r;
}

inline Rollout decode(const PolicyParams& params, const Prompt& prompt, Rng& rng, Decoding mode,
                      int image_length = kImageLength) {
  return decode(params, SlotProjection(params), prompt, rng, mode, image_length);
}

inline Rollout greedy_decode(const PolicyParams& params, const Prompt& prompt) {
  Rng unused(0);
  return decode(params, prompt, unused, Decoding::kGreedy);
}

// G rollouts sampled under bundle.old. The caller refreshes old beforehand.
inline std::vector<Rollout> sample_group(const PolicyBundle& bundle, const Prompt& prompt, int G,
                                         std::uint64_t seed) {
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(G));
  Rng rng(derive_seed(seed, "sample_group"));
  const SlotProjection proj(bundle.old);
  for (int i = 0; i < G; ++i) out.push_back(decode(bundle.old, proj, prompt, rng, Decoding::kSample));
  return out;
}

// k3 estimator exp(d) - d - 1 with d = logp_ref - logp_theta, per token.
inline double kl_term(double logp_theta, double logp_ref) {
  const double d = logp_ref - logp_theta;
  return std::exp(d) - d - 1.0;
}

// Mean of the per-token KL estimates over all text and image tokens.
inline double kl_estimate(const SequenceLogprobs& theta, const SequenceLogprobs& ref) {
  const std::size_t n = theta.text.size() + theta.image.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < theta.text.size(); ++j) sum += kl_term(theta.text[j], ref.text[j]);
  for (std::size_t j = 0; j < theta.image.size(); ++j)
    sum += kl_term(theta.image[j], ref.image[j]);
  return sum / static_cast<double>(n);
}

inline double kl_estimate(const PolicyBundle& bundle, const Rollout& r) {
  return kl_estimate(logprob_eval(bundle.current, r), logprob_eval(bundle.reference(), r));
}

// Value of an objective of per-token log-probabilities, with its partial
// derivatives (adjoints) with respect to each of them.
struct ObjectiveEval {
  double value = 0.0;
  std::vector<SequenceLogprobs> adjoint;
};

template <typename F>
concept LogprobObjective = std::invocable<F, std::span<const SequenceLogprobs>> &&
    std::same_as<std::invoke_result_t<F, std::span<const SequenceLogprobs>>, ObjectiveEval>;

struct GradResult {
  double value = 0.0;
  std::vector<double> gradient;  // flat, PolicyParams layout
};

// Reverse-mode gradient of objective(logprob_eval(params, r) for r in
// rollouts) with respect to the flat parameter vector.
template <LogprobObjective Objective>
GradResult grad(Objective&& objective, const PolicyParams& params,
                std::span<const Rollout> rollouts) {
  const SlotProjection proj(params);
  std::vector<std::vector<TokenTrace>> traces(rollouts.size());
  std::vector<SequenceLogprobs> logps(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const Rollout& r = rollouts[i];
    auto& tr = traces[i];
    tr.resize(r.text.size() + r.image.size());
    logps[i].text.resize(r.text.size());
    logps[i].image.resize(r.image.size());
    for_each_position(r, params.dims().context,
                      [&](Phase phase, std::size_t j, Token tok, const std::vector<Token>& ctx) {
                        TokenTrace& t = tr[phase == Phase::kText ? j : r.text.size() + j];
                        detail::forward(params, proj, ctx, phase, t);
                        const double lp = t.logp[static_cast<std::size_t>(id(tok) - t.range.begin)];
                        (phase == Phase::kText ? logps[i].text : logps[i].image)[j] = lp;
                      });
  }
  ObjectiveEval eval = objective(std::span<const SequenceLogprobs>(logps));
  GradResult out{eval.value, std::vector<double>(params.size(), 0.0)};
  std::vector<double> scratch;
  detail::SlotAdjoint slots(params.dims());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const Rollout& r = rollouts[i];
    const SequenceLogprobs& adj = eval.adjoint[i];
    for (std::size_t j = 0; j < r.text.size(); ++j) {
      if (adj.text[j] != 0.0)
        detail::backward(params, traces[i][j], r.text[j], adj.text[j], out.gradient, slots, scratch);
    }
    for (std::size_t j = 0; j < r.image.size(); ++j) {
      if (adj.image[j] != 0.0)
        detail::backward(params, traces[i][r.text.size() + j], r.image[j], adj.image[j],
                         out.gradient, slots, scratch);
    }
  }
  slots.expand(params, out.gradient);
  for (std::size_t p = 0; p < out.gradient.size(); ++p) {
    if (!std::isfinite(out.gradient[p]))
      throw NonFiniteGradient("gradient component " + std::to_string(p) + " is not finite");
  }
  return out;
}

}  // namespace dogrpo
