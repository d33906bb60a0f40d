#pragma once

// Toy autoregressive categorical policy: one-hot window of the last C
// tokens -> tanh hidden layer -> next-token logits. Exact log-probs,
// full next-token distributions, an analytic gradient of the clipped GRPO
// objective and an Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pagrpo/grpo_math.hpp"
#include "pagrpo/rng.hpp"
#include "pagrpo/vocab.hpp"

namespace pagrpo {

struct PolicyDims {
  std::size_t vocab = 48;
  std::size_t context = 8;
  std::size_t hidden = 64;

  std::size_t input() const { return context * vocab; }
  std::size_t parameter_count() const { return hidden * input() + hidden + vocab * hidden + vocab; }
  bool operator==(const PolicyDims&) const = default;
};

// Flat parameter vector. Layout (row-major): W1 [H x C*V], b1 [H],
// W2 [V x H], b2 [V].
struct PolicyParams {
  PolicyDims dims;
  std::vector<double> data;

  PolicyParams() = default;
  explicit PolicyParams(PolicyDims d) : dims(d), data(d.parameter_count(), 0.0) {}

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return dims.hidden * dims.input(); }
  std::size_t w2_offset() const { return b1_offset() + dims.hidden; }
  std::size_t b2_offset() const { return w2_offset() + dims.vocab * dims.hidden; }

  std::span<const double> w1() const { return {data.data() + w1_offset(), dims.hidden * dims.input()}; }
  std::span<const double> b1() const { return {data.data() + b1_offset(), dims.hidden}; }
  std::span<const double> w2() const { return {data.data() + w2_offset(), dims.vocab * dims.hidden}; }
  std::span<const double> b2() const { return {data.data() + b2_offset(), dims.vocab}; }
  std::span<double> w2() { return {data.data() + w2_offset(), dims.vocab * dims.hidden}; }
  std::span<double> b2() { return {data.data() + b2_offset(), dims.vocab}; }

  bool operator==(const PolicyParams&) const = default;
};

// Weights ~ U(-scale/sqrt(fan_in), scale/sqrt(fan_in)); biases zero.
inline PolicyParams init_policy(std::uint64_t seed, PolicyDims dims, double scale = 1.0) {
  if (dims.vocab == 0 || dims.context == 0 || dims.hidden == 0)
    throw std::invalid_argument("init_policy: dimensions must be positive");
  if (!(scale >= 0.0)) throw std::invalid_argument("init_policy: negative scale");
  PolicyParams p(dims);
  Rng rng(seed);
  const double a1 = scale / std::sqrt(static_cast<double>(dims.input()));
  const double a2 = scale / std::sqrt(static_cast<double>(dims.hidden));
  for (std::size_t i = 0; i < dims.hidden * dims.input(); ++i) p.data[p.w1_offset() + i] = a1 * (2.0 * rng.uniform() - 1.0);
  for (std::size_t i = 0; i < dims.vocab * dims.hidden; ++i) p.data[p.w2_offset() + i] = a2 * (2.0 * rng.uniform() - 1.0);
  return p;
}

// Last `width` tokens of `seq`, left-padded with PAD.
inline std::vector<TokenId> context_window(std::span<const TokenId> seq, std::size_t width) {
  std::vector<TokenId> ctx(width, Vocabulary::pad);
  const std::size_t n = std::min(width, seq.size());
  std::copy(seq.end() - static_cast<std::ptrdiff_t>(n), seq.end(), ctx.end() - static_cast<std::ptrdiff_t>(n));
  return ctx;
}

// Scratch buffers for one forward evaluation.
struct Forward {
  std::vector<double> hidden;  // tanh activations
  std::vector<double> logits;  // scaled by 1/temperature
  std::vector<double> probs;
  double max_logit = 0.0;
  double log_norm = 0.0;  // log sum exp(logits - max_logit)

  double logp(TokenId a) const { return (logits[a] - max_logit) - log_norm; }
};

// `context` must hold exactly dims.context ids (see context_window).
inline void forward(const PolicyParams& p, std::span<const TokenId> context, double temperature, Forward& f) {
  const auto& d = p.dims;
  if (context.size() != d.context) throw std::invalid_argument("forward: context width mismatch");
  f.hidden.assign(p.b1().begin(), p.b1().end());
  const double* w1 = p.data.data() + p.w1_offset();
  const std::size_t in = d.input();
  for (std::size_t j = 0; j < d.context; ++j) {
    if (context[j] >= d.vocab) throw std::out_of_range("forward: token id out of range");
    const std::size_t col = j * d.vocab + context[j];
    for (std::size_t h = 0; h < d.hidden; ++h) f.hidden[h] += w1[h * in + col];
  }
  for (auto& h : f.hidden) h = std::tanh(h);
  f.logits.resize(d.vocab);
  const double* w2 = p.data.data() + p.w2_offset();
  const double* b2 = p.data.data() + p.b2_offset();
  const double inv_t = 1.0 / temperature;
  for (std::size_t v = 0; v < d.vocab; ++v) {
    double z = b2[v];
    const double* row = w2 + v * d.hidden;
    for (std::size_t h = 0; h < d.hidden; ++h) z += row[h] * f.hidden[h];
    f.logits[v] = z * inv_t;
  }
  f.max_logit = *std::max_element(f.logits.begin(), f.logits.end());
  f.probs.resize(d.vocab);
  double sum = 0.0;
  for (std::size_t v = 0; v < d.vocab; ++v) sum += (f.probs[v] = std::exp(f.logits[v] - f.max_logit));
  for (auto& q : f.probs) q /= sum;
  f.log_norm = std::log(sum);
}

inline std::vector<double> next_token_dist(const PolicyParams& p, std::span<const TokenId> context) {
  Forward f;
  forward(p, context_window(context, p.dims.context), 1.0, f);
  return f.probs;
}

struct Rollout {
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;
  std::vector<std::vector<double>> dists;  // full next-token distribution per step
  std::vector<double> logp;                // log-prob of the chosen token per step
  std::string text;                        // decoded completion
  double temperature = 1.0;

  std::size_t length() const { return tokens.size(); }
};

namespace detail {

template <class Choose>
Rollout generate(const PolicyParams& p, const Vocabulary& vocab, std::span<const TokenId> prompt,
                 std::size_t max_len, double temperature, Choose&& choose) {
  if (max_len < 1) throw std::invalid_argument("rollout: max_len must be >= 1");
  if (vocab.size() != p.dims.vocab) throw std::invalid_argument("rollout: vocabulary/policy size mismatch");
  Rollout r;
  r.prompt.assign(prompt.begin(), prompt.end());
  r.temperature = temperature;
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  Forward f;
  while (r.tokens.size() < max_len) {
    forward(p, context_window(seq, p.dims.context), temperature, f);
    const TokenId a = choose(f);
    r.dists.push_back(f.probs);
    r.logp.push_back(f.logp(a));
    r.tokens.push_back(a);
    seq.push_back(a);
    if (a == Vocabulary::eos) break;
  }
  r.text = vocab.decode(r.tokens);
  return r;
}

}  // namespace detail

inline Rollout sample_rollout(const PolicyParams& p, const Vocabulary& vocab, std::span<const TokenId> prompt,
                              std::size_t max_len, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_rollout: temperature must be positive");
  return detail::generate(p, vocab, prompt, max_len, temperature, [&](const Forward& f) {
    const double u = rng.uniform();
    double c = 0.0;
    for (std::size_t v = 0; v < f.probs.size(); ++v) {
      c += f.probs[v];
      if (u < c) return static_cast<TokenId>(v);
    }
    // u landed in the rounding gap above the cumulative sum
    for (std::size_t v = f.probs.size(); v-- > 0;)
      if (f.probs[v] > 0.0) return static_cast<TokenId>(v);
    return static_cast<TokenId>(0);
  });
}

// Argmax decoding (lowest id wins ties); distributions and log-probs are
// recorded at temperature 1.
inline Rollout greedy_rollout(const PolicyParams& p, const Vocabulary& vocab, std::span<const TokenId> prompt,
                              std::size_t max_len) {
  return detail::generate(p, vocab, prompt, max_len, 1.0, [](const Forward& f) {
    return static_cast<TokenId>(std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin());
  });
}

// Teacher-forced re-scoring of the rollout's tokens under `p`, at the
// temperature the rollout was sampled with.
inline std::vector<double> logprobs_under(const PolicyParams& p, const Rollout& r) {
  std::vector<TokenId> seq(r.prompt);
  std::vector<double> out;
  out.reserve(r.tokens.size());
  Forward f;
  for (auto a : r.tokens) {
    if (a >= p.dims.vocab) throw std::out_of_range("logprobs_under: token id out of range");
    forward(p, context_window(seq, p.dims.context), r.temperature, f);
    out.push_back(f.logp(a));
    seq.push_back(a);
  }
  return out;
}

// One group of G rollouts for a single question under a single template,
// with its advantages and the behavior (old) and optional reference
// log-probs.
struct GroupSample {
  std::vector<Rollout> rollouts;
  AdvantageSet advantages;
  Ragged old_logp;
  std::optional<Ragged> ref_logp;
  std::size_t template_index = 0;
};

struct LossOptions {
  ClipConfig clip;
  LossNormalization norm = LossNormalization::per_group;
  bool keep_ratios = false;
  // Test hook: selects the wrong min/clip branch for tokens outside the
  // clip interval. The loss value is unaffected.
  bool fault_flip_clip_branch = false;
};

struct LossResult {
  double loss = 0.0;          // -objective
  std::vector<double> grad;   // d loss / d params (empty when not requested)
  std::size_t tokens = 0;
  std::size_t clipped = 0;    // tokens whose clipped branch binds
  double kl_sum = 0.0;        // sum of per-token penalties (when ref present)
  std::vector<Ragged> ratios; // per group, when keep_ratios
};

inline LossResult loss_gradient(const PolicyParams& p, std::span<const GroupSample> groups, const LossOptions& opt,
                                bool want_grad = true) {
  if (groups.empty()) throw std::invalid_argument("loss_gradient: empty batch");
  opt.clip.validate();
  const auto& d = p.dims;
  const double beta = opt.clip.beta;

  // Forward pass, caching activations for the backward pass.
  struct Cache {
    std::vector<double> hidden, probs;
    std::vector<TokenId> ctx;
    double inv_t = 1.0;
  };
  std::vector<std::vector<std::vector<Cache>>> cache(groups.size());
  std::vector<GroupTerms> terms(groups.size());
  std::vector<Ragged> ratios(groups.size());
  std::vector<Ragged> new_logp(groups.size());
  std::vector<std::size_t> group_tokens(groups.size());
  LossResult res;
  Forward f;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (grp.rollouts.size() != grp.advantages.advantages.size())
      throw std::invalid_argument("loss_gradient: advantage count mismatch");
    if (beta > 0.0 && !grp.ref_logp) throw std::invalid_argument("loss_gradient: beta > 0 requires reference log-probs");
    TokenLogProbs lp;
    lp.old_logp = grp.old_logp;
    lp.ref_logp = grp.ref_logp;
    cache[g].resize(grp.rollouts.size());
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
      const auto& r = grp.rollouts[i];
      std::vector<TokenId> seq(r.prompt);
      std::vector<double> row;
      row.reserve(r.tokens.size());
      for (auto a : r.tokens) {
        if (a >= d.vocab) throw std::out_of_range("loss_gradient: token id out of range");
        auto ctx = context_window(seq, d.context);
        forward(p, ctx, r.temperature, f);
        row.push_back(f.logp(a));
        if (want_grad) cache[g][i].push_back({f.hidden, f.probs, std::move(ctx), 1.0 / r.temperature});
        seq.push_back(a);
      }
      lp.new_logp.push_back(std::move(row));
    }
    ratios[g] = importance_ratios(lp);
    terms[g].surrogate = clipped_surrogate(ratios[g], grp.advantages.advantages, opt.clip);
    if (grp.ref_logp) {
      auto pen = kl_penalty(lp.new_logp, lp.ref_logp, opt.clip.kl);
      for (const auto& row : pen)
        for (double x : row) res.kl_sum += x;
      if (beta > 0.0) terms[g].penalty = std::move(pen);
    }
    group_tokens[g] = token_count(lp.new_logp);
    for (std::size_t i = 0; i < ratios[g].size(); ++i)
      for (double r : ratios[g][i]) res.clipped += clip_binds(r, grp.advantages.advantages[i], opt.clip) ? 1 : 0;
    res.tokens += group_tokens[g];
    new_logp[g] = std::move(lp.new_logp);
  }
  res.loss = -token_level_loss(terms, beta, opt.norm);
  if (opt.keep_ratios) res.ratios = ratios;
  if (!want_grad) return res;

  // Backward pass: dLoss/dlogp for each token, then through softmax, W2,
  // tanh and the one-hot W1 columns.
  const auto w = group_token_weights(group_tokens, opt.norm);
  res.grad.assign(d.parameter_count(), 0.0);
  double* gw1 = res.grad.data() + p.w1_offset();
  double* gb1 = res.grad.data() + p.b1_offset();
  double* gw2 = res.grad.data() + p.w2_offset();
  double* gb2 = res.grad.data() + p.b2_offset();
  const double* w2 = p.data.data() + p.w2_offset();
  const std::size_t in = d.input();
  std::vector<double> dz(d.vocab), dh(d.hidden);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
      const auto& r = grp.rollouts[i];
      const double adv = grp.advantages.advantages[i];
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        const double ratio = ratios[g][i][t];
        double ds = clipped_surrogate_grad(ratio, adv, opt.clip);
        if (opt.fault_flip_clip_branch && clip_ratio(ratio, opt.clip) != ratio)
          ds = clip_binds(ratio, adv, opt.clip) ? ratio * adv : 0.0;
        double dobj = ds;
        if (beta > 0.0) dobj -= beta * kl_penalty_grad(new_logp[g][i][t], (*grp.ref_logp)[i][t], opt.clip.kl);
        const double c = -w[g] * dobj;  // d loss / d logp
        if (c == 0.0) continue;
        const Cache& cc = cache[g][i][t];
        const TokenId a = r.tokens[t];
        for (std::size_t v = 0; v < d.vocab; ++v) dz[v] = c * cc.inv_t * ((v == a ? 1.0 : 0.0) - cc.probs[v]);
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t v = 0; v < d.vocab; ++v) {
          gb2[v] += dz[v];
          double* grow = gw2 + v * d.hidden;
          const double* wrow = w2 + v * d.hidden;
          for (std::size_t h = 0; h < d.hidden; ++h) {
            grow[h] += dz[v] * cc.hidden[h];
            dh[h] += dz[v] * wrow[h];
          }
        }
        for (std::size_t h = 0; h < d.hidden; ++h) {
          const double dpre = dh[h] * (1.0 - cc.hidden[h] * cc.hidden[h]);
          gb1[h] += dpre;
          for (std::size_t j = 0; j < d.context; ++j) gw1[h * in + j * d.vocab + cc.ctx[j]] += dpre;
        }
      }
    }
  }
  return res;
}

// Fills old/ref log-probs by re-scoring under the given snapshots.
inline void attach_logprobs(std::span<GroupSample> groups, const PolicyParams& old_params,
                            const PolicyParams* ref_params) {
  for (auto& g : groups) {
    g.old_logp.clear();
    for (const auto& r : g.rollouts) g.old_logp.push_back(logprobs_under(old_params, r));
    if (ref_params) {
      Ragged ref;
      for (const auto& r : g.rollouts) ref.push_back(logprobs_under(*ref_params, r));
      g.ref_logp = std::move(ref);
    } else {
      g.ref_logp.reset();
    }
  }
}

inline LossResult loss_gradient(const PolicyParams& p, const PolicyParams& old_params, const PolicyParams* ref_params,
                                std::vector<GroupSample> groups, const LossOptions& opt) {
  attach_logprobs(groups, old_params, ref_params);
  return loss_gradient(p, groups, opt);
}

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  bool operator==(const AdamState&) const = default;
};

struct AdamStep {
  PolicyParams params;
  AdamState state;
};

inline AdamStep optimizer_step(const PolicyParams& p, std::span<const double> grad, const AdamState& s,
                               const AdamConfig& c) {
  const std::size_t n = p.data.size();
  if (grad.size() != n) throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  if ((!s.m.empty() && s.m.size() != n) || (!s.v.empty() && s.v.size() != n))
    throw std::invalid_argument("optimizer_step: optimizer state shape mismatch");
  AdamStep out{p, s};
  auto& m = out.state.m;
  auto& v = out.state.v;
  if (m.empty()) m.assign(n, 0.0);
  if (v.empty()) v.assign(n, 0.0);
  const std::uint64_t t = ++out.state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < n; ++k) {
    m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grad[k];
    v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
    const double mhat = m[k] / bc1;
    const double vhat = v[k] / bc2;
    out.params.data[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
  return out;
}

}  // namespace pagrpo
