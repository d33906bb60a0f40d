// pagrpo command-line entry point.
//
//   pagrpo train --config configs/toy.cfg --set total_steps=100 --out runs/a
//   pagrpo eval --checkpoint runs/a/checkpoints/final.ck
//   pagrpo render qwen_freeform "1+1=?"
//   pagrpo reward fixtures.jsonl
//   pagrpo gradcheck --seed 1 --cases 24
//   pagrpo templates-list

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pagrpo/pagrpo.hpp"

using namespace pagrpo;

namespace {

struct TrainArgs {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
  std::string profile;
  std::string ablate;
  std::string out = "run";
  std::string resume;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string eval_set;
  std::size_t n = 0;
  std::string out;
};

struct RewardArgs {
  std::string input;
  std::string out;
  std::string templates_file;
  bool reflection_corrected = false;
  double w_acc = 1.0;
  double w_fmt = 1.0;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t cases = 24;
  bool inject_fault = false;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

TrainConfig build_config(const TrainArgs& a) {
  TrainConfig cfg = preset_config(a.preset.empty() ? "toy" : a.preset);
  if (!a.config_path.empty()) cfg = load_config_file(a.config_path, cfg);
  for (const auto& s : a.sets) apply_assignment(cfg, s);
  if (const char* env = std::getenv("PAGRPO_SEED"); env && *env) {
    const std::string v(env);
    for (const char* key : {"seed_data", "seed_rollout", "seed_init"}) apply_setting(cfg, key, v);
  }
  if (!a.profile.empty()) cfg = apply_profile(cfg, a.profile);
  cfg.validate();
  return cfg;
}

void print_eval_line(std::size_t step, const EvalReport& rep) {
  double worst = 1.0;
  std::string worst_id;
  for (const auto& [id, s] : rep.per_template)
    if (s.format < worst) {
      worst = s.format;
      worst_id = id;
    }
  std::cout << "eval step " << step << ": format macro " << std::fixed << std::setprecision(3) << rep.macro_format
            << " (min " << worst << " " << worst_id << "), accuracy macro " << rep.macro_accuracy << " micro "
            << rep.micro_accuracy << std::defaultfloat << '\n';
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = build_config(a);
  if (!a.ablate.empty()) {
    const auto profiles = split_list(a.ablate);
    if (profiles.empty()) throw std::invalid_argument("--ablate needs at least one profile");
    const auto results = run_ablation(cfg, profiles, a.out);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const auto& m = results[i].metrics.back();
      std::cout << profiles[i] << ": final reward " << m.reward_mean << ", entropy " << m.entropy << ", kl "
                << m.kl_mean << '\n';
    }
    std::cout << "wrote " << (std::filesystem::path(a.out) / "ablation.csv").string() << '\n';
    return 0;
  }
  RunOptions opt;
  opt.out_dir = a.out;
  opt.resume_from = a.resume;
  if (!a.profile.empty()) opt.manifest_extra["profile"] = a.profile;
  if (!a.quiet) {
    opt.on_metrics = [&](const StepMetrics& m) {
      if ((m.step + 1) % cfg.eval_every != 0) return;
      std::cout << "step " << m.step + 1 << ": reward " << m.reward_mean << " format " << m.fmt_mean << " entropy "
                << m.entropy << " len " << m.len_mean << '\n';
    };
    opt.on_eval = print_eval_line;
  }
  try {
    const auto r = run_training(cfg, opt);
    std::cout << "manifest: " << r.manifest_path.string() << '\n';
  } catch (const NonFiniteLoss& e) {
    std::cerr << "run aborted: " << e.what() << '\n';
    std::cerr << "diagnostic dump: " << e.dump_path << '\n';
    return 3;
  }
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const auto ck = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = parse_config_text(ck.config_text);
  const auto templates = load_template_catalog(cfg);
  const Vocabulary vocab(templates, cfg.vocab_size);
  if (vocab.hash() != ck.vocab_hash) throw std::runtime_error("checkpoint vocabulary does not match its config");
  if (templates.hash() != ck.template_hash) throw std::runtime_error("checkpoint template set does not match its config");
  const auto questions = a.eval_set.empty() ? make_eval_set(cfg, a.n) : read_dataset_jsonl(a.eval_set);
  if (questions.empty()) throw std::runtime_error("empty evaluation set");
  const auto rep = evaluate(ck.params, vocab, templates, questions, cfg.max_len, cfg.format);
  nlohmann::ordered_json j;
  j["checkpoint"] = a.checkpoint;
  j["step"] = ck.step;
  j["questions"] = questions.size();
  const auto body = rep.to_json();
  for (const auto& [k, v] : body.items()) j[k] = v;
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    out << j.dump(2) << '\n';
    print_eval_line(ck.step, rep);
  }
  return 0;
}

int cmd_render(const std::string& id, const std::string& question, const std::string& templates_file) {
  const auto set = templates_file.empty() ? load_builtin_templates() : load_templates_from_file(templates_file);
  const auto p = render(set.find(id), question);
  std::cout << "completion_offset=" << p.completion_offset << '\n' << p.full_text << '\n';
  return 0;
}

int cmd_reward(const RewardArgs& a) {
  const auto set = a.templates_file.empty() ? load_builtin_templates() : load_templates_from_file(a.templates_file);
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + a.input);
  std::ofstream file_out;
  if (!a.out.empty()) {
    file_out.open(a.out, std::ios::binary);
    if (!file_out) throw std::runtime_error("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file_out;
  FormatOptions fmt;
  fmt.reflection_reward_corrected = a.reflection_corrected;
  const RewardWeights w{a.w_acc, a.w_fmt};

  std::string line;
  std::size_t lineno = 0, n = 0;
  double acc = 0.0, form = 0.0, total = 0.0;
  out << std::setprecision(17);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RewardBreakdown b;
    std::string id;
    try {
      const auto j = nlohmann::json::parse(line);
      id = j.at("template_id").get<std::string>();
      const auto& g = j.at("gold");
      const GoldAnswer gold(g.is_string() ? g.get<std::string>() : g.dump());
      b = score_completion(j.at("completion").get<std::string>(), set.find(id), gold, w, fmt);
    } catch (const std::exception& e) {
      throw std::runtime_error(a.input + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    nlohmann::ordered_json o;
    o["template_id"] = id;
    o["reward_id"] = b.reward_id;
    o["accuracy"] = b.accuracy;
    o["format"] = b.format;
    o["total"] = b.total;
    out << o.dump() << '\n';
    acc += b.accuracy;
    form += b.format;
    total += b.total;
    ++n;
  }
  if (n > 0) {
    const double d = static_cast<double>(n);
    std::cerr << n << " completions: mean accuracy " << acc / d << ", mean format " << form / d << ", mean total "
              << total / d << '\n';
  } else {
    std::cerr << "0 completions\n";
  }
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  GradcheckOptions o;
  o.inject_fault = a.inject_fault;
  const auto cases = run_gradcheck(a.seed, a.cases, o);
  double worst = 0.0;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    const bool ok = c.rel_error <= o.tolerance;
    failed += ok ? 0 : 1;
    worst = std::max(worst, c.rel_error);
    std::cout << "case " << std::setw(2) << c.index << "  G=" << c.group_size << " beta=" << c.beta
              << " clip=" << (c.clip_active ? "active" : "inactive") << " (" << c.clipped_tokens << "/" << c.tokens
              << ") degenerate=" << (c.degenerate ? "yes" : "no")
              << " norm=" << (c.norm == LossNormalization::per_group ? "per_group" : "per_batch")
              << "  max rel err " << std::scientific << std::setprecision(3) << c.rel_error << std::defaultfloat
              << (ok ? "  ok" : "  FAIL") << '\n';
  }
  std::cout << cases.size() - failed << "/" << cases.size() << " cases within " << o.tolerance << " (worst "
            << std::scientific << std::setprecision(3) << worst << std::defaultfloat << ")\n";
  return failed == 0 ? 0 : 1;
}

int cmd_templates_list(const std::string& templates_file) {
  const auto set = templates_file.empty() ? load_builtin_templates() : load_templates_from_file(templates_file);
  std::cout << std::left << std::setw(22) << "id" << std::setw(16) << "category" << std::setw(26) << "reward"
            << "teacher_forced\n";
  for (const auto& t : set)
    std::cout << std::setw(22) << t.id << std::setw(16) << to_string(t.category) << std::setw(26) << t.reward_id
              << (t.teacher_forced() ? "yes" : "no") << '\n';
  std::cout << set.size() << " templates, hash " << std::hex << set.hash() << std::dec << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-augmented GRPO on a toy policy"};
  app.set_version_flag("--version", version_string);
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run training (writes manifest, metrics, checkpoints)");
  t->add_option("--config", train.config_path, "key=value config file");
  t->add_option("--preset", train.preset, "base preset: toy or paper");
  t->add_option("--set", train.sets, "override, key=value (repeatable)");
  t->add_option("--profile", train.profile, "prompt_aug | single_template | no_format_reward | kl_beta:<b>");
  t->add_option("--ablate", train.ablate, "comma-separated profiles run with matched seeds");
  t->add_option("--out", train.out, "output directory")->capture_default_str();
  t->add_option("--resume", train.resume, "checkpoint to resume from");
  t->add_flag("--quiet", train.quiet, "no progress lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  e->add_option("--eval-set", ev.eval_set, "questions as JSONL (default: held-out toy questions)");
  e->add_option("--n", ev.n, "number of held-out questions (default: eval_size)");
  e->add_option("--out", ev.out, "report path (default: stdout)");

  std::string render_id, render_question, render_templates;
  auto* r = app.add_subcommand("render", "Print a rendered prompt");
  r->add_option("template_id", render_id)->required();
  r->add_option("question", render_question)->required();
  r->add_option("--templates-file", render_templates);

  RewardArgs rw;
  auto* w = app.add_subcommand("reward", "Score completions from JSONL {template_id, completion, gold}");
  w->add_option("input", rw.input)->required();
  w->add_option("--out", rw.out, "output JSONL (default: stdout)");
  w->add_option("--templates-file", rw.templates_file);
  w->add_flag("--reflection-corrected", rw.reflection_corrected, "count </check> instead of </answer> in reflection");
  w->add_option("--w-acc", rw.w_acc)->capture_default_str();
  w->add_option("--w-fmt", rw.w_fmt)->capture_default_str();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  g->add_option("--seed", gc.seed)->capture_default_str();
  g->add_option("--cases", gc.cases)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_flag("--inject-fault", gc.inject_fault)->group("");

  std::string list_templates;
  auto* l = app.add_subcommand("templates-list", "List the template catalog");
  l->add_option("--templates-file", list_templates);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(ev);
    if (*r) return cmd_render(render_id, render_question, render_templates);
    if (*w) return cmd_reward(rw);
    if (*g) return cmd_gradcheck(gc);
    if (*l) return cmd_templates_list(list_templates);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
