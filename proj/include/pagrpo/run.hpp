#pragma once

// Run persistence: manifest, metrics/eval JSONL, checkpoints, resume and
// matched-seed ablation sweeps.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagrpo/checkpoint.hpp"
#include "pagrpo/config.hpp"
#include "pagrpo/trainer.hpp"

namespace pagrpo {

inline constexpr const char* version_string = "pagrpo 0.1.0";

inline TemplateSet load_template_catalog(const TrainConfig& cfg) {
  return cfg.templates_file.empty() ? load_builtin_templates() : load_templates_from_file(cfg.templates_file);
}

inline std::vector<ToyQuestion> make_training_set(const TrainConfig& cfg) {
  return gen_dataset(cfg.seed_data, cfg.dataset_size, cfg.mix);
}

// Held-out questions: a separate stream derived from the data seed.
inline std::vector<ToyQuestion> make_eval_set(const TrainConfig& cfg, std::size_t n = 0) {
  return gen_dataset(derive_seed(cfg.seed_data, {0xE7A1u}), n ? n : cfg.eval_size, cfg.mix);
}

inline Checkpoint make_checkpoint(const Trainer& t) {
  Checkpoint ck;
  ck.vocab_hash = t.vocab().hash();
  ck.template_hash = t.templates().hash();
  ck.step = t.step_index();
  ck.config_text = config_to_text(t.config());
  ck.params = t.params();
  ck.adam = t.adam();
  ck.ref = t.reference();
  return ck;
}

inline void restore_checkpoint(Trainer& t, const Checkpoint& ck) {
  if (ck.vocab_hash != t.vocab().hash()) throw std::runtime_error("checkpoint vocabulary does not match this run");
  if (ck.template_hash != t.templates().hash()) throw std::runtime_error("checkpoint template set does not match this run");
  t.restore(ck.params, ck.adam, ck.ref, ck.step);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunOptions {
  std::string out_dir = "run";
  std::string tag;          // suffix for file names (ablation profiles)
  std::string resume_from;  // checkpoint path
  bool checkpoints = true;
  nlohmann::ordered_json manifest_extra = nlohmann::ordered_json::object();
  std::function<void(const StepMetrics&)> on_metrics;
  std::function<void(std::size_t, const EvalReport&)> on_eval;
  std::function<void(Trainer&)> setup;  // install observers before the first step
};

struct RunResult {
  std::vector<StepMetrics> metrics;  // steps executed by this call
  std::optional<EvalReport> last_eval;
  std::filesystem::path metrics_path;
  std::filesystem::path manifest_path;
  std::filesystem::path final_checkpoint;
};

namespace detail {

inline std::string suffixed(const std::string& stem, const std::string& tag, const std::string& ext) {
  return tag.empty() ? stem + ext : stem + "_" + tag + ext;
}

// Keeps the first `n` lines of a JSONL file (resume truncates to the
// checkpoint step).
inline void keep_lines(const std::filesystem::path& p, std::size_t n) {
  std::vector<std::string> lines;
  {
    std::ifstream in(p);
    std::string line;
    while (lines.size() < n && std::getline(in, line)) lines.push_back(line);
  }
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

inline void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace detail

inline RunResult run_training(const TrainConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  const fs::path ck_dir = dir / (opt.tag.empty() ? std::string("checkpoints") : "checkpoints_" + opt.tag);
  if (opt.checkpoints) fs::create_directories(ck_dir);

  RunResult result;
  result.metrics_path = dir / detail::suffixed("metrics", opt.tag, ".jsonl");
  result.manifest_path = dir / detail::suffixed("manifest", opt.tag, ".json");
  const fs::path eval_path = dir / detail::suffixed("eval", opt.tag, ".jsonl");

  Trainer trainer(cfg, make_training_set(cfg), load_template_catalog(cfg));
  trainer.set_dump_path((dir / detail::suffixed("diagnostic", opt.tag, ".json")).string());
  if (opt.setup) opt.setup(trainer);
  if (!opt.resume_from.empty()) restore_checkpoint(trainer, load_checkpoint(opt.resume_from));
  const auto eval_set = make_eval_set(cfg);

  nlohmann::ordered_json manifest;
  manifest["version"] = version_string;
  manifest["status"] = "running";
  manifest["started"] = utc_timestamp();
  manifest["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_items(cfg)) manifest["config"][k] = v;
  manifest["seeds"] = {{"data", cfg.seed_data}, {"rollout", cfg.seed_rollout}, {"init", cfg.seed_init}};
  manifest["template_set_hash"] = trainer.templates().hash();
  manifest["vocab_hash"] = trainer.vocab().hash();
  manifest["vocab_size"] = trainer.vocab().size();
  manifest["active_templates"] = nlohmann::ordered_json::array();
  for (const auto& t : trainer.active_templates()) manifest["active_templates"].push_back(t.id);
  manifest["resumed_from"] = opt.resume_from.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(opt.resume_from);
  manifest["start_step"] = trainer.step_index();
  manifest["paths"] = {{"metrics", result.metrics_path.filename().string()},
                       {"eval", eval_path.filename().string()},
                       {"checkpoints", opt.checkpoints ? ck_dir.filename().string() : ""}};
  for (const auto& [k, v] : opt.manifest_extra.items()) manifest[k] = v;
  detail::write_json(result.manifest_path, manifest);

  if (trainer.step_index() > 0) {
    detail::keep_lines(result.metrics_path, trainer.step_index());
    detail::keep_lines(eval_path, trainer.step_index() / cfg.eval_every);
  } else {
    std::ofstream(result.metrics_path, std::ios::trunc);
    std::ofstream(eval_path, std::ios::trunc);
  }
  std::ofstream metrics_out(result.metrics_path, std::ios::app | std::ios::binary);
  std::ofstream eval_out(eval_path, std::ios::app | std::ios::binary);

  try {
    while (trainer.step_index() < cfg.total_steps) {
      const auto m = trainer.step();
      metrics_out << m.to_json().dump() << '\n';
      metrics_out.flush();
      result.metrics.push_back(m);
      if (opt.on_metrics) opt.on_metrics(m);
      const std::size_t done = trainer.step_index();
      if (done % cfg.eval_every == 0 || done == cfg.total_steps) {
        auto rep = trainer.evaluate_on(eval_set);
        if (done % cfg.eval_every == 0) {
          nlohmann::ordered_json j;
          j["step"] = done;
          const auto body = rep.to_json();
          for (const auto& [k, v] : body.items()) j[k] = v;
          eval_out << j.dump() << '\n';
          eval_out.flush();
          if (opt.checkpoints) save_checkpoint((ck_dir / ("step_" + std::to_string(done) + ".ck")).string(), make_checkpoint(trainer));
        }
        if (opt.on_eval) opt.on_eval(done, rep);
        result.last_eval = std::move(rep);
      }
    }
  } catch (const NonFiniteLoss& e) {
    manifest["status"] = "aborted";
    manifest["error"] = e.what();
    manifest["diagnostic_dump"] = e.dump_path;
    manifest["finished"] = utc_timestamp();
    detail::write_json(result.manifest_path, manifest);
    throw;
  }

  if (opt.checkpoints) {
    result.final_checkpoint = ck_dir / "final.ck";
    save_checkpoint(result.final_checkpoint.string(), make_checkpoint(trainer));
    manifest["final_checkpoint"] = (ck_dir.filename() / "final.ck").string();
  }
  manifest["status"] = "completed";
  manifest["end_step"] = trainer.step_index();
  manifest["finished"] = utc_timestamp();
  if (result.last_eval) manifest["final_eval"] = result.last_eval->to_json();
  detail::write_json(result.manifest_path, manifest);
  return result;
}

// Matched-seed runs differing only by profile; writes metrics_<tag>.jsonl
// per profile plus ablation.csv aligned on step.
inline std::vector<RunResult> run_ablation(const TrainConfig& base, const std::vector<std::string>& profiles,
                                           const std::string& out_dir, bool checkpoints = false) {
  std::vector<RunResult> results;
  std::vector<std::string> tags;
  for (const auto& p : profiles) {
    RunOptions o;
    o.out_dir = out_dir;
    o.tag = profile_tag(p);
    o.checkpoints = checkpoints;
    o.manifest_extra["profile"] = p;
    results.push_back(run_training(apply_profile(base, p), o));
    tags.push_back(o.tag);
  }
  std::ofstream csv(std::filesystem::path(out_dir) / "ablation.csv", std::ios::trunc);
  csv << "step";
  for (const auto& t : tags)
    for (const char* col : {"reward_mean", "acc_mean", "fmt_mean", "entropy", "kl_mean"}) csv << ',' << t << ':' << col;
  csv << '\n';
  csv.precision(17);
  for (std::size_t s = 0; s < base.total_steps; ++s) {
    csv << s;
    for (const auto& r : results) {
      const auto& m = r.metrics.at(s);
      csv << ',' << m.reward_mean << ',' << m.acc_mean << ',' << m.fmt_mean << ',' << m.entropy << ',' << m.kl_mean;
    }
    csv << '\n';
  }
  return results;
}

}  // namespace pagrpo
