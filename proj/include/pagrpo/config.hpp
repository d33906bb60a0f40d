#pragma once

// Training configuration: flat key=value text, two presets ("toy" and
// "paper") and the ablation profiles, each a delta on a base config.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagrpo/grpo_math.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/rewards.hpp"
#include "pagrpo/task.hpp"

namespace pagrpo {

struct TrainConfig {
  std::string preset = "toy";
  std::size_t group_size = 8;
  std::size_t prompt_batch = 32;
  std::size_t mini_batch = 8;
  ClipConfig clip;
  LossNormalization loss_norm = LossNormalization::per_group;
  RewardWeights weights;
  FormatOptions format;
  std::string template_set = "all";  // "all" | "single:<id>"
  std::string templates_file;        // empty: built-in catalog
  std::string single_template_id = "qwen_freeform";
  std::size_t total_steps = 300;
  std::uint64_t seed_data = 1;
  std::uint64_t seed_rollout = 1;
  std::uint64_t seed_init = 1;
  std::size_t max_len = 64;
  double temperature = 1.0;
  std::size_t eval_every = 20;
  std::size_t eval_size = 16;
  AdamConfig adam;
  std::size_t context_width = 8;
  std::size_t hidden = 64;
  std::size_t vocab_size = 48;
  double init_scale = 1.0;
  double eos_bias = 1.5;  // initial logit offset of the EOS token
  std::size_t dataset_size = 1024;
  DifficultyMix mix;
  std::size_t workers = 1;

  std::size_t inner_updates() const { return prompt_batch / mini_batch; }

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (mini_batch == 0 || prompt_batch == 0 || prompt_batch % mini_batch != 0)
      throw std::invalid_argument("prompt_batch must be a positive multiple of mini_batch");
    if (prompt_batch > dataset_size) throw std::invalid_argument("prompt_batch exceeds dataset_size");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be >= 1");
    if (workers == 0) throw std::invalid_argument("workers must be >= 1");
    if (template_set != "all" && !template_set.starts_with("single:"))
      throw std::invalid_argument("template_set must be 'all' or 'single:<id>'");
    clip.validate();
    mix.validate();
    if (weights.accuracy < 0.0 || weights.format < 0.0) throw std::invalid_argument("reward weights must be >= 0");
  }
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw std::invalid_argument("bad number for " + key + ": '" + v + "'");
  return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw std::invalid_argument("bad integer for " + key + ": '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("bad boolean for " + key + ": '" + v + "'");
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field size_field(T TrainConfig::*m) {
  return {[m](TrainConfig& c, const std::string& v) { c.*m = static_cast<T>(parse_uint("", v)); },
          [m](const TrainConfig& c) { return std::to_string(c.*m); }};
}

inline const std::vector<std::pair<std::string, Field>>& fields() {
  using C = TrainConfig;
  auto dbl = [](auto getter) {
    return Field{[getter](C& c, const std::string& v) { getter(c) = parse_double("", v); },
                 [getter](const C& c) { return fmt_double(getter(const_cast<C&>(c))); }};
  };
  auto str = [](std::string C::*m) {
    return Field{[m](C& c, const std::string& v) { c.*m = v; }, [m](const C& c) { return c.*m; }};
  };
  static const std::vector<std::pair<std::string, Field>> f = {
      {"preset", str(&C::preset)},
      {"group_size", size_field(&C::group_size)},
      {"prompt_batch", size_field(&C::prompt_batch)},
      {"mini_batch", size_field(&C::mini_batch)},
      {"eps_low", dbl([](C& c) -> double& { return c.clip.eps_low; })},
      {"eps_high", dbl([](C& c) -> double& { return c.clip.eps_high; })},
      {"beta", dbl([](C& c) -> double& { return c.clip.beta; })},
      {"eps_std", dbl([](C& c) -> double& { return c.clip.eps_std; })},
      {"kl_estimator",
       {[](C& c, const std::string& v) {
          if (v == "k3") c.clip.kl = KlEstimator::k3;
          else if (v == "log_ratio") c.clip.kl = KlEstimator::log_ratio;
          else throw std::invalid_argument("kl_estimator must be k3 or log_ratio");
        },
        [](const C& c) { return std::string(c.clip.kl == KlEstimator::k3 ? "k3" : "log_ratio"); }}},
      {"loss_norm",
       {[](C& c, const std::string& v) {
          if (v == "per_group") c.loss_norm = LossNormalization::per_group;
          else if (v == "per_batch") c.loss_norm = LossNormalization::per_batch;
          else throw std::invalid_argument("loss_norm must be per_group or per_batch");
        },
        [](const C& c) {
          return std::string(c.loss_norm == LossNormalization::per_group ? "per_group" : "per_batch");
        }}},
      {"w_acc", dbl([](C& c) -> double& { return c.weights.accuracy; })},
      {"w_fmt", dbl([](C& c) -> double& { return c.weights.format; })},
      {"reflection_reward_corrected",
       {[](C& c, const std::string& v) {
          c.format.reflection_reward_corrected = parse_bool("reflection_reward_corrected", v);
        },
        [](const C& c) { return std::string(c.format.reflection_reward_corrected ? "true" : "false"); }}},
      {"template_set", str(&C::template_set)},
      {"templates_file", str(&C::templates_file)},
      {"single_template_id", str(&C::single_template_id)},
      {"total_steps", size_field(&C::total_steps)},
      {"seed_data", size_field(&C::seed_data)},
      {"seed_rollout", size_field(&C::seed_rollout)},
      {"seed_init", size_field(&C::seed_init)},
      {"max_len", size_field(&C::max_len)},
      {"temperature", dbl([](C& c) -> double& { return c.temperature; })},
      {"eval_every", size_field(&C::eval_every)},
      {"eval_size", size_field(&C::eval_size)},
      {"lr", dbl([](C& c) -> double& { return c.adam.lr; })},
      {"adam_beta1", dbl([](C& c) -> double& { return c.adam.beta1; })},
      {"adam_beta2", dbl([](C& c) -> double& { return c.adam.beta2; })},
      {"adam_eps", dbl([](C& c) -> double& { return c.adam.eps; })},
      {"context_width", size_field(&C::context_width)},
      {"hidden", size_field(&C::hidden)},
      {"vocab_size", size_field(&C::vocab_size)},
      {"init_scale", dbl([](C& c) -> double& { return c.init_scale; })},
      {"eos_bias", dbl([](C& c) -> double& { return c.eos_bias; })},
      {"dataset_size", size_field(&C::dataset_size)},
      {"difficulty_mix",
       {[](C& c, const std::string& v) { c.mix = parse_difficulty_mix(v); },
        [](const C& c) { return to_string(c.mix); }}},
      {"workers", size_field(&C::workers)},
  };
  return f;
}

inline std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : detail::fields()) {
    if (k != key) continue;
    try {
      f.set(c, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
    return;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

// "key=value"
inline void apply_assignment(TrainConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("expected key=value, got '" + std::string(assignment) + "'");
  apply_setting(c, detail::trim_copy(assignment.substr(0, eq)), detail::trim_copy(assignment.substr(eq + 1)));
}

inline std::vector<std::pair<std::string, std::string>> config_items(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : detail::fields()) out.emplace_back(k, f.get(c));
  return out;
}

inline std::string config_to_text(const TrainConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_items(c)) out += k + "=" + v + "\n";
  return out;
}

inline TrainConfig preset_config(std::string_view name) {
  TrainConfig c;
  if (name == "toy") return c;
  if (name == "paper") {
    c.preset = "paper";
    c.prompt_batch = 128;
    c.mini_batch = 32;
    c.adam.lr = 1e-6;
    c.max_len = 3072;
    c.dataset_size = 4096;
    c.eos_bias = 0.0;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

// Lines "key = value"; '#' starts a comment. A leading "preset" line
// selects the base preset before the remaining keys apply.
inline TrainConfig parse_config_text(std::string_view text, TrainConfig base = {}) {
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim_copy(line);
    if (!line.empty()) lines.emplace_back(lineno, line);
  }
  for (const auto& [n, l] : lines) {
    const auto eq = l.find('=');
    if (eq != std::string::npos && detail::trim_copy(std::string_view(l).substr(0, eq)) == "preset")
      base = preset_config(detail::trim_copy(std::string_view(l).substr(eq + 1)));
  }
  for (const auto& [n, l] : lines) {
    try {
      apply_assignment(base, l);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

// Ablation profiles: "prompt_aug" (no change), "single_template",
// "no_format_reward" (w_fmt = 0), "kl_beta:<beta>" or "kl_beta(<beta>)".
inline TrainConfig apply_profile(TrainConfig c, std::string_view profile) {
  if (profile == "prompt_aug") return c;
  if (profile == "single_template") {
    c.template_set = "single:" + c.single_template_id;
    return c;
  }
  if (profile == "no_format_reward") {
    c.weights.format = 0.0;
    return c;
  }
  if (profile.starts_with("kl_beta")) {
    std::string rest(profile.substr(7));
    if (rest.starts_with(":")) rest.erase(0, 1);
    else if (rest.starts_with("(") && rest.ends_with(")")) rest = rest.substr(1, rest.size() - 2);
    else throw std::invalid_argument("kl_beta profile needs a value, e.g. kl_beta:0.04");
    c.clip.beta = detail::parse_double("kl_beta", rest);
    return c;
  }
  throw std::invalid_argument("unknown profile '" + std::string(profile) + "'");
}

// File-name friendly profile tag ("kl_beta(0.04)" -> "kl_beta_0.04").
inline std::string profile_tag(std::string_view profile) {
  std::string s(profile);
  for (auto& ch : s)
    if (ch == ':' || ch == '(') ch = '_';
  std::erase(s, ')');
  return s;
}

}  // namespace pagrpo
