#pragma once

// Reasoning-template catalog: the 13 built-in chat templates, a plain-text
// template file loader, uniform sampling and prompt rendering.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagrpo/format_rewards.hpp"
#include "pagrpo/rng.hpp"

namespace pagrpo {

enum class Category { deepseek_style, freeform, reflection, explicit_cot };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::deepseek_style: return "deepseek_style";
    case Category::freeform: return "freeform";
    case Category::reflection: return "reflection";
    case Category::explicit_cot: return "explicit_cot";
  }
  return "?";
}

inline Category parse_category(std::string_view s) {
  for (auto c : {Category::deepseek_style, Category::freeform, Category::reflection, Category::explicit_cot})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown template category: " + std::string(s));
}

struct Template {
  std::string id;
  Category category = Category::freeform;
  std::string system_text;
  std::string user_prefix;
  std::string user_suffix;
  std::string assistant_prefix;
  std::string reward_id = "constant_one";
  std::string chat_open = "<|im_start|>";
  std::string chat_close = "<|im_end|>";

  // Assistant turn pre-seeded with an opening structural tag.
  bool teacher_forced() const { return assistant_prefix.find('<') != std::string::npos; }

  bool operator==(const Template&) const = default;
};

class TemplateSet {
 public:
  TemplateSet() = default;

  explicit TemplateSet(std::vector<Template> templates) : templates_(std::move(templates)) {
    for (std::size_t i = 0; i < templates_.size(); ++i) {
      const auto& t = templates_[i];
      if (!valid_id(t.id)) throw std::invalid_argument("invalid template id: '" + t.id + "'");
      if (!is_registered_format_reward(t.reward_id))
        throw std::invalid_argument("template '" + t.id + "': unknown reward_id '" + t.reward_id + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (templates_[j].id == t.id) throw std::invalid_argument("duplicate template id: '" + t.id + "'");
    }
  }

  std::size_t size() const { return templates_.size(); }
  bool empty() const { return templates_.empty(); }
  const Template& operator[](std::size_t i) const { return templates_.at(i); }
  auto begin() const { return templates_.begin(); }
  auto end() const { return templates_.end(); }
  const std::vector<Template>& templates() const { return templates_; }

  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < templates_.size(); ++i)
      if (templates_[i].id == id) return i;
    throw std::out_of_range("unknown template id: '" + std::string(id) + "'");
  }
  bool contains(std::string_view id) const {
    return std::any_of(templates_.begin(), templates_.end(), [&](const Template& t) { return t.id == id; });
  }
  const Template& find(std::string_view id) const { return templates_[index_of(id)]; }

  std::map<Category, std::size_t> category_counts() const {
    std::map<Category, std::size_t> counts;
    for (const auto& t : templates_) ++counts[t.category];
    return counts;
  }

  // FNV-1a over every field, used to tag runs and checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::string_view s) {
      for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
      h = (h ^ 0xff) * 0x100000001b3ULL;
    };
    for (const auto& t : templates_) {
      for (auto s : {std::string_view(t.id), to_string(t.category), std::string_view(t.system_text),
                     std::string_view(t.user_prefix), std::string_view(t.user_suffix),
                     std::string_view(t.assistant_prefix), std::string_view(t.reward_id),
                     std::string_view(t.chat_open), std::string_view(t.chat_close)})
        mix(s);
    }
    return h;
  }

  static bool valid_id(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
             c == '-' || c == '.';
    });
  }

 private:
  std::vector<Template> templates_;
};

inline TemplateSet load_builtin_templates() {
  const std::string boxed_sys = "Please reason step by step, and put your final answer within \\boxed{}.";
  const std::string r1_newline_sys =
      "You are a helpful AI Assistant that provides well-reasoned and detailed responses. You first think "
      "about the reasoning process as an internal monologue and then provide the user with the answer. "
      "Respond in the following format: <think>\n...\n</think>\n<answer>\n...\n</answer>\nInside the "
      "<answer>...</answer> block, the final answer must be enclosed in \\boxed{}.";
  const std::string r1_plain_sys =
      "A conversation between User and Assistant. The User asks a question, and the Assistant solves it. "
      "The Assistant first thinks about the reasoning process in the mind and then provides the User with "
      "the answer. The reasoning process is enclosed within <think> </think> and answer is enclosed within "
      "<answer> </answer> tags, respectively, i.e., <think> reasoning process here </think> <answer> answer "
      "here </answer>. Inside the <answer>...</answer> block, the final answer must be enclosed in "
      "\\boxed{}.";
  const std::string reflection_sys =
      "You are a helpful assistant that solves math problems. Always write out your reasoning to produce a "
      "solution, then check whether the solution is correct, fix it if it is wrong, and finally give the "
      "final answer. Respond in exactly the following format: <solution>\nreasoning and "
      "solution\n</solution>\n<check>\nLet's verify step by step ...\n</check>\nPut your final answer within "
      "\\boxed{}.";

  auto make = [](std::string id, Category cat, std::string sys, std::string user_suffix,
                 std::string assistant_prefix, std::string reward) {
    Template t;
    t.id = std::move(id);
    t.category = cat;
    t.system_text = std::move(sys);
    t.user_suffix = std::move(user_suffix);
    t.assistant_prefix = std::move(assistant_prefix);
    t.reward_id = std::move(reward);
    return t;
  };

  using C = Category;
  return TemplateSet({
      make("cot_boxed", C::explicit_cot, boxed_sys, "", "Let's think step by step.", "constant_one"),
      make("qwen_freeform", C::freeform, "You are a helpful assistant.",
           "\nPlease reason step by step, and put your final answer within \\boxed{}.", "", "constant_one"),
      make("qwen_boxed_system", C::freeform, boxed_sys, "", "", "constant_one"),
      make("deepseek_newline", C::deepseek_style, r1_newline_sys, "", "", "deepseek_r1_newline"),
      make("deepseek_newline_tf", C::deepseek_style, r1_newline_sys, "", "<think>\n", "deepseek_r1_newline_tf"),
      make("deepseek_plain", C::deepseek_style, r1_plain_sys, "", "", "deepseek_r1_plain"),
      make("deepseek_plain_tf", C::deepseek_style, r1_plain_sys, "", "<think>", "deepseek_r1_plain_tf"),
      make("rigorous_derivation", C::freeform,
           "You are an intelligent assistant who helps with user questions. Provide a rigorous, step-by-step "
           "derivation of the solution. The final answer must be clearly indicated within \\boxed{}.",
           "", "", "constant_one"),
      make("lm_eval_cot", C::explicit_cot,
           "Solve the following math challenge. Explain your approach step-by-step\nThe answer should end "
           "with: The final answer is: \\boxed{answer}\nwhere [answer] is just the final number or expression "
           "that solves the problem.",
           "", "Let's think step by step", "lm_eval_final_answer"),
      make("lm_eval_freeform", C::freeform, "Analyze and solve the math task.",
           "\nEnd the answer with:\nThe final answer is: \\boxed{answer} where [answer] is just the final "
           "number or expression that solves the problem.",
           "", "lm_eval_final_answer"),
      make("stepwise_cot", C::explicit_cot,
           "Solve the following math problem\nShow each step of your solution\nPut the final answer within "
           "\\boxed{answer}\nwhere [answer] is just the final number or expression that solves the problem.",
           "", "Let's think step by step", "constant_one"),
      make("reflection", C::reflection, reflection_sys, "", "", "reflection"),
      make("reflection_tf", C::reflection, reflection_sys, "", "<solution>", "reflection_tf"),
  });
}

// Template file format: records separated by a line holding only "---".
// Single-line fields "key: value"; multi-line fields as heredocs
// "key<<TAG" ... "TAG" with the body's line breaks preserved verbatim
// (the newline before the terminator is not part of the value).
inline TemplateSet parse_templates(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) {
        if (pos < text.size()) lines.emplace_back(text.substr(pos));
        break;
      }
      lines.emplace_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
    for (auto& l : lines)
      if (!l.empty() && l.back() == '\r') l.pop_back();
  }

  auto fail = [](std::size_t line, const std::string& msg) -> std::invalid_argument {
    return std::invalid_argument("template file line " + std::to_string(line) + ": " + msg);
  };

  std::vector<Template> out;
  std::vector<std::size_t> record_lines;
  Template cur;
  std::map<std::string, bool> seen;
  std::size_t record_start = 0;
  bool in_record = false;

  auto finish = [&]() {
    if (!in_record) return;
    for (const char* k : {"id", "category", "reward"})
      if (!seen.count(k)) throw fail(record_start, std::string("record missing '") + k + "'");
    if (!is_registered_format_reward(cur.reward_id))
      throw fail(record_start, "unknown reward_id '" + cur.reward_id + "'");
    for (const auto& t : out)
      if (t.id == cur.id) throw fail(record_start, "duplicate template id '" + cur.id + "'");
    out.push_back(cur);
    cur = Template{};
    seen.clear();
    in_record = false;
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& l = lines[i];
    const std::size_t lineno = i + 1;
    if (l == "---") {
      finish();
      continue;
    }
    if (l.empty() || l.front() == '#') continue;
    if (!in_record) {
      in_record = true;
      record_start = lineno;
    }
    if (auto hd = l.find("<<"); hd != std::string::npos && l.find(':') > hd) {
      const std::string key = l.substr(0, hd);
      const std::string tag = l.substr(hd + 2);
      if (tag.empty()) throw fail(lineno, "heredoc without terminator tag");
      std::string body;
      bool closed = false;
      bool first = true;
      for (++i; i < lines.size(); ++i) {
        if (lines[i] == tag) {
          closed = true;
          break;
        }
        if (!first) body += '\n';
        body += lines[i];
        first = false;
      }
      if (!closed) throw fail(lineno, "unterminated heredoc '" + key + "'");
      if (key == "system") cur.system_text = body;
      else if (key == "user_prefix") cur.user_prefix = body;
      else if (key == "user_suffix") cur.user_suffix = body;
      else if (key == "assistant_prefix") cur.assistant_prefix = body;
      else throw fail(lineno, "unknown block '" + key + "'");
      seen[key] = true;
      continue;
    }
    const auto colon = l.find(':');
    if (colon == std::string::npos) throw fail(lineno, "expected 'key: value' or 'key<<TAG'");
    const std::string key = l.substr(0, colon);
    std::string value = l.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    if (key == "id") {
      if (!TemplateSet::valid_id(value)) throw fail(lineno, "invalid id '" + value + "'");
      cur.id = value;
    } else if (key == "category") {
      try {
        cur.category = parse_category(value);
      } catch (const std::invalid_argument& e) {
        throw fail(lineno, e.what());
      }
    } else if (key == "reward") {
      cur.reward_id = value;
    } else if (key == "chat_open") {
      cur.chat_open = value;
    } else if (key == "chat_close") {
      cur.chat_close = value;
    } else {
      throw fail(lineno, "unknown field '" + key + "'");
    }
    seen[key] = true;
  }
  finish();
  return TemplateSet(std::move(out));
}

inline TemplateSet load_templates_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open template file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_templates(ss.str());
}

inline std::string write_templates(const TemplateSet& set) {
  std::string out;
  auto block = [&](const char* key, const std::string& body) {
    if (body.empty()) return;
    out += std::string(key) + "<<EOF\n" + body + "\nEOF\n";
  };
  bool first = true;
  for (const auto& t : set) {
    if (!first) out += "---\n";
    first = false;
    out += "id: " + t.id + "\n";
    out += "category: " + std::string(to_string(t.category)) + "\n";
    out += "reward: " + t.reward_id + "\n";
    if (t.chat_open != "<|im_start|>") out += "chat_open: " + t.chat_open + "\n";
    if (t.chat_close != "<|im_end|>") out += "chat_close: " + t.chat_close + "\n";
    block("system", t.system_text);
    block("user_prefix", t.user_prefix);
    block("user_suffix", t.user_suffix);
    block("assistant_prefix", t.assistant_prefix);
  }
  return out;
}

inline const Template& sample_template(const TemplateSet& set, Rng& rng) {
  if (set.empty()) throw std::invalid_argument("sample_template: empty template set");
  return set[rng.below(set.size())];
}

struct RenderedPrompt {
  std::string full_text;
  std::string template_id;
  std::string question;
  std::size_t completion_offset = 0;
};

inline RenderedPrompt render(const Template& t, std::string_view question) {
  if (question.empty()) throw std::invalid_argument("render: empty question");
  RenderedPrompt p;
  p.template_id = t.id;
  p.question = std::string(question);
  std::string& s = p.full_text;
  s += t.chat_open + "system\n" + t.system_text + t.chat_close + "\n";
  s += t.chat_open + "user\n" + t.user_prefix;
  s += question;
  s += t.user_suffix + t.chat_close + "\n";
  s += t.chat_open + "assistant\n" + t.assistant_prefix;
  p.completion_offset = s.size();
  return p;
}

}  // namespace pagrpo
