#pragma once

// Template-specific format rewards. Every rule counts exact substring
// occurrences in the completion and grants a fixed share per marker whose
// count is exactly one. Shares are accumulated in marker order so the
// floating-point result matches the reference Python functions bit for bit.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pagrpo {

// Non-overlapping, left-to-right occurrence count (Python str.count).
inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  if (needle.empty()) return text.size() + 1;
  std::size_t n = 0;
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string_view::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

struct FormatRule {
  std::string id;
  std::vector<std::string> markers;  // empty => constant 1.0
  double share = 0.0;
};

struct FormatOptions {
  // Table-verbatim reflection reward counts "</answer>" although the
  // template asks for <check> tags; this swaps in "</check>".
  bool reflection_reward_corrected = false;
};

namespace detail {

inline const std::vector<FormatRule>& format_rules() {
  static const std::vector<FormatRule> rules = {
      {"constant_one", {}, 0.0},
      {"lm_eval_final_answer", {"The final answer is:"}, 1.0},
      {"deepseek_r1_plain", {"<think>", "</think>", "<answer>", "</answer>"}, 0.25},
      {"deepseek_r1_plain_tf", {"</think>", "<answer>", "</answer>"}, 1.0 / 3.0},
      {"deepseek_r1_newline", {"<think>\n", "\n</think>\n", "\n<answer>\n", "\n</answer>"}, 0.25},
      {"deepseek_r1_newline_tf", {"\n</think>\n", "\n<answer>\n", "\n</answer>"}, 1.0 / 3.0},
      {"reflection",
       {"<solution>\n", "\n</solution>\n", "\n<check>\n Let's verify step by step", "</answer>"},
       0.25},
      {"reflection_tf",
       {"\n</solution>\n", "\n<check>\n Let's verify step by step", "\n</check>"},
       1.0 / 3.0},
  };
  return rules;
}

}  // namespace detail

inline std::vector<std::string> registered_format_rewards() {
  std::vector<std::string> ids;
  for (const auto& r : detail::format_rules()) ids.push_back(r.id);
  return ids;
}

inline bool is_registered_format_reward(std::string_view id) {
  const auto& rules = detail::format_rules();
  return std::any_of(rules.begin(), rules.end(), [&](const FormatRule& r) { return r.id == id; });
}

// The rule as applied under the given options.
inline FormatRule format_rule(std::string_view id, const FormatOptions& opts = {}) {
  for (const auto& r : detail::format_rules()) {
    if (r.id != id) continue;
    FormatRule rule = r;
    if (opts.reflection_reward_corrected && rule.id == "reflection") rule.markers.back() = "</check>";
    return rule;
  }
  throw std::invalid_argument("unknown reward_id: " + std::string(id));
}

inline double apply_format_rule(const FormatRule& rule, std::string_view completion) {
  if (rule.markers.empty()) return 1.0;
  double score = 0.0;
  for (const auto& m : rule.markers)
    if (count_occurrences(completion, m) == 1) score += rule.share;
  return score;
}

inline double format_reward(std::string_view reward_id, std::string_view completion,
                            const FormatOptions& opts = {}) {
  return apply_format_rule(format_rule(reward_id, opts), completion);
}

}  // namespace pagrpo
