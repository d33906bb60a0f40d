#pragma once

// Finite-difference check of loss_gradient on small random instances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pagrpo/policy.hpp"
#include "pagrpo/rng.hpp"

namespace pagrpo {

struct GradcheckCase {
  std::size_t index = 0;
  std::size_t group_size = 0;
  std::size_t groups = 0;
  double beta = 0.0;
  bool clip_active = false;  // old/new params differ enough for clipping to bind
  bool degenerate = false;   // every group has zero-variance rewards
  LossNormalization norm = LossNormalization::per_group;
  std::size_t clipped_tokens = 0;
  std::size_t tokens = 0;
  double rel_error = 0.0;
  double grad_norm_inf = 0.0;
};

struct GradcheckOptions {
  PolicyDims dims{48, 3, 6};
  double step = 1e-5;
  double tolerance = 1e-4;
  // Ratios closer than this to a clip boundary force a redraw, so the
  // finite-difference stencil never straddles a kink.
  double kink_margin = 1e-3;
  bool inject_fault = false;
};

namespace detail {

inline PolicyParams perturbed(const PolicyParams& p, double sigma, Rng& rng) {
  PolicyParams q = p;
  for (auto& x : q.data) x += sigma * (2.0 * rng.uniform() - 1.0);
  return q;
}

}  // namespace detail

// Case `index` cycles through G in {2,8}, beta in {0,0.04}, clip
// active/inactive and degenerate/non-degenerate; indices 16+ switch to
// per-batch normalization on alternate cases.
inline GradcheckCase gradcheck_case(std::uint64_t seed, std::size_t index, const GradcheckOptions& o = {}) {
  GradcheckCase c;
  c.index = index;
  c.group_size = index % 2 == 0 ? 2 : 8;
  c.beta = (index / 2) % 2 == 0 ? 0.0 : 0.04;
  c.clip_active = (index / 4) % 2 == 1 || (index >= 16 && index % 4 >= 2);
  c.degenerate = (index / 8) % 2 == 1;
  c.norm = index >= 16 && index % 2 == 1 ? LossNormalization::per_batch : LossNormalization::per_group;
  c.groups = 2;

  LossOptions opt;
  opt.clip.beta = c.beta;
  opt.norm = c.norm;
  opt.fault_flip_clip_branch = o.inject_fault;

  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, {index, attempt}));
    const PolicyParams p = init_policy(rng.next(), o.dims, 1.5);
    const PolicyParams old = c.clip_active ? detail::perturbed(p, 0.25, rng) : p;
    const PolicyParams ref = detail::perturbed(p, 0.2, rng);

    std::vector<GroupSample> groups(c.groups);
    for (auto& g : groups) {
      std::vector<double> rewards;
      for (std::size_t i = 0; i < c.group_size; ++i) {
        Rollout r;
        const std::size_t plen = 1 + rng.below(3), len = 1 + rng.below(6);
        for (std::size_t t = 0; t < plen; ++t) r.prompt.push_back(static_cast<TokenId>(rng.below(o.dims.vocab)));
        for (std::size_t t = 0; t < len; ++t) r.tokens.push_back(static_cast<TokenId>(rng.below(o.dims.vocab)));
        r.temperature = index % 3 == 2 ? 0.7 : 1.0;
        g.rollouts.push_back(std::move(r));
        rewards.push_back(c.degenerate ? 1.0 : static_cast<double>(rng.below(3)));
      }
      if (!c.degenerate && rewards == std::vector<double>(c.group_size, rewards[0])) rewards[0] += 1.0;
      g.advantages = group_advantages(rewards, 1e-8);
    }
    attach_logprobs(groups, old, c.beta > 0.0 ? &ref : nullptr);

    const auto base = loss_gradient(p, groups, LossOptions{opt.clip, opt.norm, true, o.inject_fault});
    bool near_kink = false;
    for (const auto& rows : base.ratios)
      for (const auto& row : rows)
        for (double r : row)
          near_kink = near_kink || std::abs(r - (1.0 - opt.clip.eps_low)) < o.kink_margin ||
                      std::abs(r - (1.0 + opt.clip.eps_high)) < o.kink_margin;
    if (near_kink) continue;
    if (c.clip_active && !c.degenerate && base.clipped == 0) continue;

    c.clipped_tokens = base.clipped;
    c.tokens = base.tokens;
    double max_diff = 0.0, na = 0.0, nn = 0.0;
    PolicyParams q = p;
    for (std::size_t k = 0; k < q.data.size(); ++k) {
      const double x = q.data[k];
      q.data[k] = x + o.step;
      const double up = loss_gradient(q, groups, opt, false).loss;
      q.data[k] = x - o.step;
      const double down = loss_gradient(q, groups, opt, false).loss;
      q.data[k] = x;
      const double numeric = (up - down) / (2.0 * o.step);
      max_diff = std::max(max_diff, std::abs(numeric - base.grad[k]));
      na = std::max(na, std::abs(base.grad[k]));
      nn = std::max(nn, std::abs(numeric));
    }
    const double scale = std::max(na, nn);
    c.grad_norm_inf = na;
    c.rel_error = scale < 1e-12 ? max_diff : max_diff / scale;
    return c;
  }
}

inline std::vector<GradcheckCase> run_gradcheck(std::uint64_t seed, std::size_t cases, const GradcheckOptions& o = {}) {
  std::vector<GradcheckCase> out;
  for (std::size_t i = 0; i < cases; ++i) out.push_back(gradcheck_case(seed, i, o));
  return out;
}

}  // namespace pagrpo
