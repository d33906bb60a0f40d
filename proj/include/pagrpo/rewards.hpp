#pragma once

// Reward composition: binary accuracy plus template-specific format score.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pagrpo/answer.hpp"
#include "pagrpo/format_rewards.hpp"
#include "pagrpo/templates.hpp"

namespace pagrpo {

struct RewardWeights {
  double accuracy = 1.0;
  double format = 1.0;
};

struct RewardBreakdown {
  double accuracy = 0.0;
  double format = 0.0;
  double total = 0.0;
  std::string reward_id;
};

inline RewardBreakdown combine_reward(double accuracy, double format, const RewardWeights& w = {}) {
  if (w.accuracy < 0.0 || w.format < 0.0) throw std::invalid_argument("combine_reward: negative weight");
  return {accuracy, format, w.accuracy * accuracy + w.format * format, {}};
}

inline RewardBreakdown score_completion(std::string_view completion, const Template& t, const GoldAnswer& gold,
                                        const RewardWeights& w = {}, const FormatOptions& opts = {}) {
  auto b = combine_reward(accuracy_reward(completion, gold), format_reward(t.reward_id, completion, opts), w);
  b.reward_id = t.reward_id;
  return b;
}

inline std::vector<RewardBreakdown> score_group(std::span<const std::string> completions, const Template& t,
                                                const GoldAnswer& gold, const RewardWeights& w = {},
                                                const FormatOptions& opts = {}) {
  if (completions.empty()) throw std::invalid_argument("score_group: empty group");
  if (w.accuracy < 0.0 || w.format < 0.0) throw std::invalid_argument("score_group: negative weight");
  const FormatRule rule = format_rule(t.reward_id, opts);
  std::vector<RewardBreakdown> out;
  out.reserve(completions.size());
  for (const auto& c : completions) {
    auto b = combine_reward(accuracy_reward(c, gold), apply_format_rule(rule, c), w);
    b.reward_id = t.reward_id;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace pagrpo
