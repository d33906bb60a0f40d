#pragma once

// Prompt-augmented GRPO training loop and greedy evaluation.
//
// Per batch: snapshot pi_old; per question draw ONE template and G
// rollouts under it; score, normalize rewards within the group; then run
// prompt_batch/mini_batch inner updates over disjoint mini-batches of
// whole groups.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pagrpo/config.hpp"
#include "pagrpo/grpo_math.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/rewards.hpp"
#include "pagrpo/task.hpp"
#include "pagrpo/templates.hpp"
#include "pagrpo/vocab.hpp"

namespace pagrpo {

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double reward_mean = 0.0;
  double acc_mean = 0.0;
  double fmt_mean = 0.0;
  std::vector<std::pair<std::string, double>> fmt_by_template;  // catalog order
  double entropy = 0.0;
  double clip_frac = 0.0;
  double kl_mean = 0.0;
  double loss = 0.0;
  double degen_frac = 0.0;
  double len_mean = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json by_template = nlohmann::ordered_json::object();
    for (const auto& [id, v] : fmt_by_template) by_template[id] = v;
    return {{"step", step},         {"epoch", epoch},         {"reward_mean", reward_mean},
            {"acc_mean", acc_mean}, {"fmt_mean", fmt_mean},   {"fmt_by_template", by_template},
            {"entropy", entropy},   {"clip_frac", clip_frac}, {"kl_mean", kl_mean},
            {"loss", loss},         {"degen_frac", degen_frac}, {"len_mean", len_mean}};
  }
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& msg, std::string dump) : std::runtime_error(msg), dump_path(std::move(dump)) {}
  std::string dump_path;
};

inline std::vector<TokenId> prompt_tokens(const Vocabulary& vocab, std::string_view question,
                                          std::size_t template_index) {
  std::vector<TokenId> out{Vocabulary::bos};
  for (auto t : vocab.encode(question)) out.push_back(t);
  out.push_back(vocab.cue(template_index));
  return out;
}

struct EvalStats {
  std::size_t n = 0;
  double accuracy = 0.0;     // mean accuracy reward
  double format = 0.0;       // mean format reward
  double format_full = 0.0;  // share of completions with format reward 1
};

struct EvalReport {
  std::vector<std::pair<std::string, EvalStats>> per_template;
  double macro_accuracy = 0.0;  // mean over templates
  double micro_accuracy = 0.0;  // mean over (question, template) pairs
  double macro_format = 0.0;
  double micro_format = 0.0;

  const EvalStats& at(std::string_view id) const {
    for (const auto& [k, v] : per_template)
      if (k == id) return v;
    throw std::out_of_range("no evaluation entry for template '" + std::string(id) + "'");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json table = nlohmann::ordered_json::object();
    for (const auto& [id, s] : per_template)
      table[id] = {{"n", s.n}, {"accuracy", s.accuracy}, {"format", s.format}, {"format_full", s.format_full}};
    return {{"macro_accuracy", macro_accuracy}, {"micro_accuracy", micro_accuracy},
            {"macro_format", macro_format},     {"micro_format", micro_format},
            {"per_template", table}};
  }
};

struct EvalItem {
  std::size_t question = 0;
  std::size_t template_index = 0;
};

inline EvalReport evaluate_items(const PolicyParams& params, const Vocabulary& vocab, const TemplateSet& templates,
                                 const std::vector<ToyQuestion>& questions, const std::vector<EvalItem>& items,
                                 std::size_t max_len, const FormatOptions& fmt = {}) {
  if (items.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  std::vector<EvalStats> stats(templates.size());
  double acc_sum = 0.0, fmt_sum = 0.0;
  for (const auto& it : items) {
    const auto& q = questions.at(it.question);
    const auto& t = templates[it.template_index];
    const auto r = greedy_rollout(params, vocab, prompt_tokens(vocab, q.text, it.template_index), max_len);
    const auto b = score_completion(r.text, t, q.gold, {}, fmt);
    auto& s = stats[it.template_index];
    ++s.n;
    s.accuracy += b.accuracy;
    s.format += b.format;
    s.format_full += b.format == 1.0 ? 1.0 : 0.0;
    acc_sum += b.accuracy;
    fmt_sum += b.format;
  }
  EvalReport rep;
  std::size_t used = 0;
  for (std::size_t k = 0; k < templates.size(); ++k) {
    auto s = stats[k];
    if (s.n == 0) continue;
    const double n = static_cast<double>(s.n);
    s.accuracy /= n;
    s.format /= n;
    s.format_full /= n;
    rep.macro_accuracy += s.accuracy;
    rep.macro_format += s.format;
    ++used;
    rep.per_template.emplace_back(templates[k].id, s);
  }
  rep.macro_accuracy /= static_cast<double>(used);
  rep.macro_format /= static_cast<double>(used);
  rep.micro_accuracy = acc_sum / static_cast<double>(items.size());
  rep.micro_format = fmt_sum / static_cast<double>(items.size());
  return rep;
}

// Greedy decoding of every (question, template) pair.
inline EvalReport evaluate(const PolicyParams& params, const Vocabulary& vocab, const TemplateSet& templates,
                           const std::vector<ToyQuestion>& questions, std::size_t max_len,
                           const FormatOptions& fmt = {}) {
  std::vector<EvalItem> items;
  for (std::size_t k = 0; k < templates.size(); ++k)
    for (std::size_t q = 0; q < questions.size(); ++q) items.push_back({q, k});
  return evaluate_items(params, vocab, templates, questions, items, max_len, fmt);
}

// Instrumentation passed to observers.
struct UpdateTrace {
  std::size_t step = 0;
  std::size_t update = 0;
  std::vector<std::string> template_ids;  // per group in the mini-batch
  std::vector<Ragged> ratios;             // per group
  double loss = 0.0;
  std::size_t clipped = 0;
  std::size_t tokens = 0;
};

struct BatchTrace {
  std::size_t step = 0;
  const std::vector<GroupSample>* groups = nullptr;
  std::vector<std::vector<std::string>> group_template_ids;  // per group, one id per rollout
  Ragged token_entropies;                                    // per rollout, response tokens only
  std::vector<std::size_t> lengths;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<ToyQuestion> dataset, TemplateSet templates)
      : cfg_(std::move(cfg)),
        dataset_(std::move(dataset)),
        templates_(std::move(templates)),
        vocab_(templates_, cfg_.vocab_size),
        iter_(dataset_.size(), cfg_.prompt_batch, derive_seed(cfg_.seed_data, {0x5bu})) {
    cfg_.validate();
    if (dataset_.size() < cfg_.prompt_batch) throw std::invalid_argument("dataset smaller than prompt_batch");
    if (cfg_.template_set == "all") {
      active_set_ = templates_;
    } else {
      const std::string id = cfg_.template_set.substr(7);
      active_set_ = TemplateSet({templates_.find(id)});
    }
    params_ = init_policy(cfg_.seed_init, dims(), cfg_.init_scale);
    params_.b2()[Vocabulary::eos] += cfg_.eos_bias;
    if (cfg_.clip.beta > 0.0) ref_ = params_;
  }

  PolicyDims dims() const { return {vocab_.size(), cfg_.context_width, cfg_.hidden}; }
  const TrainConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const TemplateSet& templates() const { return templates_; }
  const TemplateSet& active_templates() const { return active_set_; }
  const std::vector<ToyQuestion>& dataset() const { return dataset_; }
  const PolicyParams& params() const { return params_; }
  const AdamState& adam() const { return adam_; }
  const std::optional<PolicyParams>& reference() const { return ref_; }
  std::size_t step_index() const { return step_; }

  // Restores mutable state (e.g. from a checkpoint).
  void restore(PolicyParams params, AdamState adam, std::optional<PolicyParams> ref, std::size_t step) {
    if (params.dims != dims()) throw std::invalid_argument("restore: parameter dimensions do not match config");
    params_ = std::move(params);
    adam_ = std::move(adam);
    ref_ = std::move(ref);
    step_ = step;
  }

  void set_update_observer(std::function<void(const UpdateTrace&)> f) { on_update_ = std::move(f); }
  void set_batch_observer(std::function<void(const BatchTrace&)> f) { on_batch_ = std::move(f); }
  void set_dump_path(std::string p) { dump_path_ = std::move(p); }

  // Samples one group for dataset question `qi` at batch position `pos`.
  GroupSample sample_group(const PolicyParams& old, std::size_t qi, std::size_t pos) const {
    Rng rng(derive_seed(cfg_.seed_rollout, {step_, pos}));
    const Template& t = sample_template(active_set_, rng);
    const std::size_t k = templates_.index_of(t.id);
    const auto& q = dataset_[qi];
    const auto prompt = prompt_tokens(vocab_, q.text, k);
    GroupSample g;
    g.template_index = k;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < cfg_.group_size; ++i) {
      g.rollouts.push_back(sample_rollout(old, vocab_, prompt, cfg_.max_len, cfg_.temperature, rng));
      texts.push_back(g.rollouts.back().text);
      g.old_logp.push_back(g.rollouts.back().logp);
    }
    const auto scores = score_group(texts, t, q.gold, cfg_.weights, cfg_.format);
    std::vector<double> totals;
    for (const auto& s : scores) totals.push_back(s.total);
    g.advantages = group_advantages(totals, cfg_.clip.eps_std);
    if (ref_) {
      Ragged ref;
      for (const auto& r : g.rollouts) ref.push_back(logprobs_under(*ref_, r));
      g.ref_logp = std::move(ref);
    }
    return g;
  }

  StepMetrics step() {
    const auto batch = iter_.batch(step_);
    const PolicyParams old = params_;

    std::vector<GroupSample> groups(batch.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
      for (std::size_t j = begin; j < batch.size(); j += stride) groups[j] = sample_group(old, batch[j], j);
    };
    if (cfg_.workers <= 1) {
      work(0, 1);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < cfg_.workers; ++w) pool.emplace_back(work, w, cfg_.workers);
    }

    StepMetrics m;
    m.step = step_;
    m.epoch = iter_.epoch_of(step_);
    std::map<std::size_t, std::pair<double, std::size_t>> fmt_by;
    Ragged entropies;
    std::vector<std::size_t> lengths;
    std::size_t n_rollouts = 0, degenerate = 0;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      const auto& g = groups[j];
      const auto& t = templates_[g.template_index];
      const auto& gold = dataset_[batch[j]].gold;
      degenerate += g.advantages.degenerate ? 1 : 0;
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const auto& r = g.rollouts[i];
        const double acc = accuracy_reward(r.text, gold);
        const double fmt = format_reward(t.reward_id, r.text, cfg_.format);
        m.reward_mean += g.advantages.rewards[i];
        m.acc_mean += acc;
        m.fmt_mean += fmt;
        auto& slot = fmt_by[g.template_index];
        slot.first += fmt;
        ++slot.second;
        std::vector<double> h;
        for (const auto& dist : r.dists) {
          if (!std::all_of(dist.begin(), dist.end(), [](double x) { return std::isfinite(x); })) {
            const std::string path = dump_groups(groups, 0);
            throw NonFiniteLoss("non-finite policy output at step " + std::to_string(step_) + "; diagnostic dump: " + path,
                                path);
          }
          h.push_back(token_entropy(dist));
        }
        entropies.push_back(std::move(h));
        lengths.push_back(r.length());
        m.len_mean += static_cast<double>(r.length());
        ++n_rollouts;
      }
    }
    const double nr = static_cast<double>(n_rollouts);
    m.reward_mean /= nr;
    m.acc_mean /= nr;
    m.fmt_mean /= nr;
    m.len_mean /= nr;
    m.degen_frac = static_cast<double>(degenerate) / static_cast<double>(groups.size());
    m.entropy = aggregate_entropy(entropies, lengths);
    for (const auto& [k, v] : fmt_by) m.fmt_by_template.emplace_back(templates_[k].id, v.first / static_cast<double>(v.second));

    if (on_batch_) {
      BatchTrace bt;
      bt.step = step_;
      bt.groups = &groups;
      for (const auto& g : groups)
        bt.group_template_ids.emplace_back(g.rollouts.size(), templates_[g.template_index].id);
      bt.token_entropies = entropies;
      bt.lengths = lengths;
      on_batch_(bt);
    }

    LossOptions opt;
    opt.clip = cfg_.clip;
    opt.norm = cfg_.loss_norm;
    opt.keep_ratios = static_cast<bool>(on_update_);
    std::size_t tokens = 0, clipped = 0;
    double kl_sum = 0.0, loss_sum = 0.0;
    const std::size_t n_updates = cfg_.inner_updates();
    for (std::size_t u = 0; u < n_updates; ++u) {
      const std::span<const GroupSample> mb(groups.data() + u * cfg_.mini_batch, cfg_.mini_batch);
      auto res = loss_gradient(params_, mb, opt);
      if (!std::isfinite(res.loss)) {
        const std::string path = dump_groups(mb, u);
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_) + " update " + std::to_string(u) +
                                "; diagnostic dump: " + path,
                            path);
      }
      if (on_update_) {
        UpdateTrace tr;
        tr.step = step_;
        tr.update = u;
        for (const auto& g : mb) tr.template_ids.push_back(templates_[g.template_index].id);
        tr.ratios = std::move(res.ratios);
        tr.loss = res.loss;
        tr.clipped = res.clipped;
        tr.tokens = res.tokens;
        on_update_(tr);
      }
      auto next = optimizer_step(params_, res.grad, adam_, cfg_.adam);
      params_ = std::move(next.params);
      adam_ = std::move(next.state);
      tokens += res.tokens;
      clipped += res.clipped;
      kl_sum += res.kl_sum;
      loss_sum += res.loss;
    }
    m.loss = loss_sum / static_cast<double>(n_updates);
    m.clip_frac = static_cast<double>(clipped) / static_cast<double>(tokens);
    m.kl_mean = ref_ ? kl_sum / static_cast<double>(tokens) : 0.0;
    ++step_;
    return m;
  }

  EvalReport evaluate_on(const std::vector<ToyQuestion>& questions) const {
    return evaluate(params_, vocab_, templates_, questions, cfg_.max_len, cfg_.format);
  }

 private:
  std::string dump_groups(std::span<const GroupSample> groups, std::size_t update) const {
    nlohmann::json j;
    j["step"] = step_;
    j["update"] = update;
    for (const auto& g : groups) {
      nlohmann::json jg;
      jg["template"] = templates_[g.template_index].id;
      jg["rewards"] = g.advantages.rewards;
      jg["advantages"] = g.advantages.advantages;
      for (const auto& r : g.rollouts) jg["completions"].push_back({{"tokens", r.tokens}, {"logp", r.logp}});
      j["groups"].push_back(jg);
    }
    std::ofstream(dump_path_) << j.dump(2) << '\n';
    return dump_path_;
  }

  TrainConfig cfg_;
  std::vector<ToyQuestion> dataset_;
  TemplateSet templates_;
  TemplateSet active_set_;
  Vocabulary vocab_;
  EpochIterator iter_;
  PolicyParams params_;
  AdamState adam_;
  std::optional<PolicyParams> ref_;
  std::size_t step_ = 0;
  std::string dump_path_ = "pagrpo_diagnostic.json";
  std::function<void(const UpdateTrace&)> on_update_;
  std::function<void(const BatchTrace&)> on_batch_;
};

}  // namespace pagrpo
