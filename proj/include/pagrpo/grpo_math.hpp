#pragma once

// Numerical core of the token-level GRPO objective: group-normalized
// advantages, importance ratios, the decoupled-clip surrogate, the KL
// penalty estimator, loss aggregation and policy entropy.
//
// Sign convention: the surrogate s and the aggregated objective are
// quantities to MAXIMIZE; training minimizes their negation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pagrpo {

// Per-completion rows of per-token values; rows may differ in length.
using Ragged = std::vector<std::vector<double>>;

enum class KlEstimator { k3, log_ratio };
enum class LossNormalization { per_group, per_batch };

struct ClipConfig {
  double eps_low = 0.20;
  double eps_high = 0.28;
  double beta = 0.0;
  double eps_std = 1e-8;
  KlEstimator kl = KlEstimator::k3;

  void validate() const {
    if (!(eps_low > 0.0) || !(eps_high > 0.0)) throw std::invalid_argument("clip epsilons must be positive");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
    if (!(eps_std >= 0.0)) throw std::invalid_argument("eps_std must be non-negative");
  }
};

struct AdvantageSet {
  std::vector<double> rewards;
  std::vector<double> advantages;
  bool degenerate = false;
};

struct TokenLogProbs {
  Ragged new_logp;
  Ragged old_logp;
  std::optional<Ragged> ref_logp;
};

namespace detail {

inline void require_same_shape(const Ragged& a, const Ragged& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": row count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size()) throw std::invalid_argument(std::string(what) + ": row length mismatch");
}

inline void require_finite(const Ragged& a, const char* what) {
  for (const auto& row : a)
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

}  // namespace detail

// Population statistics; rewards with std below eps_std yield all-zero
// advantages and the degenerate flag.
inline AdvantageSet group_advantages(std::span<const double> rewards, double eps_std = 1e-8) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("group_advantages: group size must be >= 2");
  AdvantageSet out;
  out.rewards.assign(rewards.begin(), rewards.end());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double sd = std::sqrt(var);
  out.advantages.assign(g, 0.0);
  if (sd < eps_std || sd == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < g; ++i) out.advantages[i] = (rewards[i] - mean) / sd;
  return out;
}

inline Ragged importance_ratios(const TokenLogProbs& lp) {
  detail::require_same_shape(lp.new_logp, lp.old_logp, "importance_ratios");
  detail::require_finite(lp.new_logp, "importance_ratios");
  detail::require_finite(lp.old_logp, "importance_ratios");
  Ragged r(lp.new_logp.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i].resize(lp.new_logp[i].size());
    for (std::size_t t = 0; t < r[i].size(); ++t) r[i][t] = std::exp(lp.new_logp[i][t] - lp.old_logp[i][t]);
  }
  return r;
}

inline double clip_ratio(double r, const ClipConfig& c) {
  return std::clamp(r, 1.0 - c.eps_low, 1.0 + c.eps_high);
}

inline double clipped_surrogate(double r, double adv, const ClipConfig& c) {
  return std::min(r * adv, clip_ratio(r, c) * adv);
}

// True when the clipped branch is strictly smaller, i.e. the token's
// gradient through r is cut off. Ties take the unclipped branch.
inline bool clip_binds(double r, double adv, const ClipConfig& c) { return clip_ratio(r, c) * adv < r * adv; }

// d s / d log pi_new: r * A on the unclipped branch, 0 on the clipped one.
inline double clipped_surrogate_grad(double r, double adv, const ClipConfig& c) {
  return clip_binds(r, adv, c) ? 0.0 : r * adv;
}

inline Ragged clipped_surrogate(const Ragged& r, std::span<const double> adv, const ClipConfig& c) {
  if (r.size() != adv.size()) throw std::invalid_argument("clipped_surrogate: advantage count mismatch");
  Ragged s(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    s[i].resize(r[i].size());
    for (std::size_t t = 0; t < r[i].size(); ++t) s[i][t] = clipped_surrogate(r[i][t], adv[i], c);
  }
  return s;
}

// k3: exp(ref - new) - (ref - new) - 1, non-negative. log_ratio: new - ref.
inline double kl_penalty(double new_logp, double ref_logp, KlEstimator est = KlEstimator::k3) {
  const double x = ref_logp - new_logp;
  if (est == KlEstimator::log_ratio) return -x;
  return std::exp(x) - x - 1.0;
}

inline double kl_penalty_grad(double new_logp, double ref_logp, KlEstimator est = KlEstimator::k3) {
  if (est == KlEstimator::log_ratio) return 1.0;
  return 1.0 - std::exp(ref_logp - new_logp);
}

inline Ragged kl_penalty(const Ragged& new_logp, const std::optional<Ragged>& ref_logp,
                         KlEstimator est = KlEstimator::k3) {
  if (!ref_logp) throw std::invalid_argument("kl_penalty: reference log-probs missing");
  detail::require_same_shape(new_logp, *ref_logp, "kl_penalty");
  Ragged d(new_logp.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i].resize(new_logp[i].size());
    for (std::size_t t = 0; t < d[i].size(); ++t) d[i][t] = kl_penalty(new_logp[i][t], (*ref_logp)[i][t], est);
  }
  return d;
}

// Surrogate and penalty rows for one group. `penalty` may be empty, which
// stands for d == 0.
struct GroupTerms {
  Ragged surrogate;
  Ragged penalty;
};

inline std::size_t token_count(const Ragged& rows) {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

// Token weight of each group in the aggregated objective: 1/(N_groups *
// sum_i |o_i|) per group, or 1/(sum over batch of |o_i|) globally.
inline std::vector<double> group_token_weights(std::span<const std::size_t> group_tokens, LossNormalization norm) {
  if (group_tokens.empty()) throw std::invalid_argument("token_level_loss: empty batch");
  std::vector<double> w(group_tokens.size());
  if (norm == LossNormalization::per_group) {
    const double ng = static_cast<double>(group_tokens.size());
    for (std::size_t g = 0; g < w.size(); ++g) w[g] = 1.0 / (ng * static_cast<double>(group_tokens[g]));
  } else {
    std::size_t total = 0;
    for (auto n : group_tokens) total += n;
    for (auto& x : w) x = 1.0 / static_cast<double>(total);
  }
  return w;
}

// Aggregated objective: per group (1/sum_i|o_i|) sum_i sum_t (s - beta d),
// averaged over groups (or normalized by all batch tokens).
inline double token_level_loss(std::span<const GroupTerms> groups, double beta,
                               LossNormalization norm = LossNormalization::per_group) {
  if (groups.empty()) throw std::invalid_argument("token_level_loss: empty batch");
  std::vector<std::size_t> tokens;
  for (const auto& g : groups) {
    if (g.surrogate.empty()) throw std::invalid_argument("token_level_loss: empty group");
    for (const auto& row : g.surrogate)
      if (row.empty()) throw std::invalid_argument("token_level_loss: zero-length completion");
    if (!g.penalty.empty()) detail::require_same_shape(g.surrogate, g.penalty, "token_level_loss");
    tokens.push_back(token_count(g.surrogate));
  }
  const auto w = group_token_weights(tokens, norm);
  double total = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double sum = 0.0;
    const auto& s = groups[g].surrogate;
    const auto& d = groups[g].penalty;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t t = 0; t < s[i].size(); ++t) sum += s[i][t] - (d.empty() ? 0.0 : beta * d[i][t]);
    total += w[g] * sum;
  }
  return total;
}

// -sum p ln p with 0 ln 0 = 0.
inline double token_entropy(std::span<const double> dist, double tol = 1e-9) {
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw std::invalid_argument("token_entropy: negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("token_entropy: distribution not normalized");
  double h = 0.0;
  for (double p : dist)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// Token-count-weighted mean of per-token entropies over response tokens.
inline double aggregate_entropy(const Ragged& per_token, std::span<const std::size_t> lengths) {
  if (per_token.size() != lengths.size()) throw std::invalid_argument("aggregate_entropy: row count mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < per_token.size(); ++i) {
    if (per_token[i].size() != lengths[i]) throw std::invalid_argument("aggregate_entropy: length mismatch");
    for (double h : per_token[i]) sum += h;
    n += lengths[i];
  }
  if (n == 0) throw std::invalid_argument("aggregate_entropy: no tokens");
  return sum / static_cast<double>(n);
}

}  // namespace pagrpo
