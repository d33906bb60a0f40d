#include <catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "pagrpo/format_rewards.hpp"
#include "pagrpo/gradcheck.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/templates.hpp"
#include "pagrpo/vocab.hpp"

using namespace pagrpo;
using Catch::Approx;

namespace {

const TemplateSet& catalog() {
  static const TemplateSet set = load_builtin_templates();
  return set;
}

std::vector<std::string> all_markers() {
  std::vector<std::string> out;
  for (const auto& id : registered_format_rewards()) {
    for (const auto& m : format_rule(id).markers) out.push_back(m);
    for (const auto& m : format_rule(id, {true}).markers) out.push_back(m);
  }
  return out;
}

GroupSample make_group(const PolicyParams& p, const Vocabulary& vocab, const std::vector<double>& rewards, Rng& rng,
                       std::size_t max_len = 6) {
  GroupSample g;
  const std::vector<TokenId> prompt = {Vocabulary::bos, vocab.id_of("3"), vocab.id_of("+"), vocab.id_of("4")};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    g.rollouts.push_back(sample_rollout(p, vocab, prompt, max_len, 1.0, rng));
    g.old_logp.push_back(g.rollouts.back().logp);
  }
  g.advantages = group_advantages(rewards);
  return g;
}

}  // namespace

TEST_CASE("vocabulary layout", "[policy]") {
  const Vocabulary v(catalog());
  CHECK(v.size() == 48);
  CHECK(v.surface(Vocabulary::pad).empty());
  CHECK(v.surface(Vocabulary::eos).empty());
  CHECK(v.surface(v.id_of("\n<check>\n Let's verify step by step")) == "\n<check>\n Let's verify step by step");
  CHECK(v.surface(v.cue(0)) == "[cot_boxed]");
  CHECK_THROWS(v.cue(13));
  CHECK_THROWS(Vocabulary(catalog(), 30));
  CHECK_THROWS(Vocabulary(catalog(), 65));
  CHECK(Vocabulary(catalog(), 64).size() == 64);
  CHECK(Vocabulary(catalog()).hash() == v.hash());
  CHECK(Vocabulary(catalog(), 50).hash() != v.hash());
}

TEST_CASE("tokenizer round trip and marker alignment", "[policy]") {
  const Vocabulary v(catalog());
  const auto markers = all_markers();
  Rng rng(8);
  for (int n = 0; n < 3000; ++n) {
    std::vector<TokenId> ids;
    const auto len = rng.below(30);
    for (std::uint64_t i = 0; i < len; ++i) ids.push_back(static_cast<TokenId>(3 + rng.below(v.size() - 3)));
    const std::string text = v.decode(ids);
    REQUIRE(v.decode(v.encode(text)) == text);
    for (const auto& m : markers) REQUIRE(v.count_marker(ids, m) == count_occurrences(text, m));
  }
  CHECK_THROWS(v.encode("@@"));
}

TEST_CASE("init_policy", "[policy]") {
  const PolicyDims d{48, 8, 64};
  CHECK(init_policy(5, d) == init_policy(5, d));
  CHECK_FALSE(init_policy(5, d) == init_policy(6, d));
  CHECK_THROWS(init_policy(1, PolicyDims{48, 0, 64}));

  const auto zero = init_policy(1, d, 0.0);
  const auto u = next_token_dist(zero, std::vector<TokenId>{1, 4, 5});
  for (double p : u) CHECK(p == Approx(1.0 / 48.0).epsilon(1e-14));
  CHECK(token_entropy(u) == Approx(std::log(48.0)).margin(1e-12));

  const auto p = init_policy(3, d);
  Rng rng(1);
  for (int n = 0; n < 100; ++n) {
    std::vector<TokenId> ctx;
    for (int j = 0; j < 8; ++j) ctx.push_back(static_cast<TokenId>(rng.below(48)));
    const auto dist = next_token_dist(p, ctx);
    double sum = 0.0;
    for (double x : dist) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(token_entropy(dist) >= 0.9 * std::log(48.0));
  }
}

TEST_CASE("softmax identity", "[policy]") {
  auto p = init_policy(1, PolicyDims{6, 2, 3}, 0.0);
  for (std::size_t v = 0; v < 6; ++v) p.b2()[v] = std::log(static_cast<double>(v + 1));
  const auto dist = next_token_dist(p, std::vector<TokenId>{1});
  for (std::size_t v = 0; v < 6; ++v) CHECK(dist[v] == Approx(static_cast<double>(v + 1) / 21.0).epsilon(1e-14));
  const auto q = oracle::probs(p, oracle::window({1}, 2), 1.0);
  for (std::size_t v = 0; v < 6; ++v) CHECK(dist[v] == Approx(q[v]).epsilon(1e-14));
}

TEST_CASE("rollouts", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(2, PolicyDims{48, 8, 64});
  const std::vector<TokenId> prompt = {Vocabulary::bos, v.id_of("7")};
  Rng a(3), b(3);
  const auto r1 = sample_rollout(p, v, prompt, 64, 1.0, a);
  const auto r2 = sample_rollout(p, v, prompt, 64, 1.0, b);
  CHECK(r1.tokens == r2.tokens);
  CHECK(r1.logp == r2.logp);
  CHECK(r1.text == v.decode(r1.tokens));
  CHECK(r1.length() <= 64);
  for (std::size_t t = 0; t < r1.dists.size(); ++t) {
    double s = 0.0;
    for (double x : r1.dists[t]) s += x;
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(std::log(r1.dists[t][r1.tokens[t]]) == Approx(r1.logp[t]).margin(1e-12));
    // stored distribution matches a fresh evaluation
    std::vector<TokenId> seq = prompt;
    seq.insert(seq.end(), r1.tokens.begin(), r1.tokens.begin() + static_cast<std::ptrdiff_t>(t));
    const auto fresh = next_token_dist(p, seq);
    CHECK(token_entropy(fresh) == Approx(token_entropy(r1.dists[t])).margin(1e-12));
  }
  CHECK(logprobs_under(p, r1) == r1.logp);
  const auto q = init_policy(9, PolicyDims{48, 8, 64});
  CHECK(logprobs_under(q, r1) != r1.logp);
  Rng c(1);
  CHECK_THROWS(sample_rollout(p, v, prompt, 0, 1.0, c));
  CHECK_THROWS(sample_rollout(p, v, prompt, 5, 0.0, c));
}

TEST_CASE("deterministic and low-temperature sampling follow the greedy path", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(4, PolicyDims{48, 8, 64}, 3.0);
  const std::vector<TokenId> prompt = {Vocabulary::bos, v.id_of("2")};
  const auto g = greedy_rollout(p, v, prompt, 20);
  Rng rng(5);
  const auto cold = sample_rollout(p, v, prompt, 20, 1e-6, rng);
  CHECK(cold.tokens == g.tokens);

  // near one-hot rows: sampling reproduces greedy
  auto sharp = p;
  for (auto& x : sharp.data) x *= 200.0;
  Rng r2(6);
  CHECK(sample_rollout(sharp, v, prompt, 20, 1.0, r2).tokens == greedy_rollout(sharp, v, prompt, 20).tokens);
}

TEST_CASE("zero advantages give zero gradient", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(2, PolicyDims{48, 4, 8});
  Rng rng(1);
  std::vector<GroupSample> groups = {make_group(p, v, {1, 1, 1, 1}, rng), make_group(p, v, {0, 0}, rng)};
  const auto res = loss_gradient(p, groups, LossOptions{});
  CHECK(res.loss == 0.0);
  for (double x : res.grad) CHECK(x == 0.0);
}

TEST_CASE("on-policy gradient equals the REINFORCE form", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(12, PolicyDims{48, 4, 8});
  Rng rng(2);
  std::vector<GroupSample> groups = {make_group(p, v, {1, 0, 0, 2}, rng), make_group(p, v, {0.5, 0, 1}, rng)};
  const auto res = loss_gradient(p, groups, LossOptions{});
  CHECK(res.clipped == 0);

  std::vector<double> expect(p.data.size(), 0.0);
  for (const auto& g : groups) {
    double tokens = 0.0;
    for (const auto& r : g.rollouts) tokens += static_cast<double>(r.length());
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& r = g.rollouts[i];
      std::vector<TokenId> seq = r.prompt;
      for (auto a : r.tokens) {
        const auto gl = oracle::grad_logp(p, oracle::window(seq, p.dims.context), a, 1.0);
        for (std::size_t k = 0; k < gl.size(); ++k)
          expect[k] -= g.advantages.advantages[i] * gl[k] / tokens / static_cast<double>(groups.size());
        seq.push_back(a);
      }
    }
  }
  double err = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < expect.size(); ++k) {
    err = std::max(err, std::abs(expect[k] - res.grad[k]));
    scale = std::max(scale, std::abs(expect[k]));
  }
  CHECK(scale > 1e-6);
  CHECK(err <= 1e-12 * std::max(1.0, scale));
}

TEST_CASE("finite-difference gradient check", "[policy]") {
  const auto cases = run_gradcheck(7, 24);
  std::size_t clipped_cases = 0, deg = 0, beta = 0;
  for (const auto& c : cases) {
    INFO("case " << c.index << " G=" << c.group_size << " beta=" << c.beta);
    CHECK(c.rel_error <= 1e-4);
    clipped_cases += c.clipped_tokens > 0 ? 1 : 0;
    deg += c.degenerate ? 1 : 0;
    beta += c.beta > 0.0 ? 1 : 0;
  }
  CHECK(clipped_cases >= 4);
  CHECK(deg >= 4);
  CHECK(beta >= 4);
}

TEST_CASE("gradient check detects a flipped clip branch", "[policy]") {
  GradcheckOptions o;
  o.inject_fault = true;
  bool detected = false;
  for (const auto& c : run_gradcheck(7, 8, o))
    if (c.rel_error > o.tolerance) detected = true;
  CHECK(detected);
}

TEST_CASE("gradient with temperature and per-batch normalization matches finite differences", "[policy]") {
  GradcheckOptions o;
  for (std::size_t i : {16u, 17u, 18u, 19u, 22u, 23u}) CHECK(gradcheck_case(99, i, o).rel_error <= 1e-4);
}

TEST_CASE("raising an advantage raises that completion's log-prob after a step", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(21, PolicyDims{48, 8, 16});
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto base = make_group(p, v, {1, 0, 0, 0}, rng, 8);
    auto total_after = [&](double adv0) {
      auto g = base;
      g.advantages.advantages[0] = adv0;
      const auto res = loss_gradient(p, std::vector<GroupSample>{g}, LossOptions{});
      auto q = p;
      for (std::size_t k = 0; k < q.data.size(); ++k) q.data[k] -= 1e-3 * res.grad[k];
      double s = 0.0;
      for (double x : logprobs_under(q, g.rollouts[0])) s += x;
      return s;
    };
    const double a0 = base.advantages.advantages[0];
    CHECK(total_after(a0 + 0.5) > total_after(a0));
    CHECK(total_after(a0) > total_after(a0 - 0.5));
  }
}

TEST_CASE("loss_gradient input validation", "[policy]") {
  const Vocabulary v(catalog());
  const auto p = init_policy(2, PolicyDims{48, 4, 8});
  Rng rng(1);
  auto g = make_group(p, v, {1, 0}, rng);
  LossOptions beta;
  beta.clip.beta = 0.04;
  CHECK_THROWS(loss_gradient(p, std::vector<GroupSample>{g}, beta));
  CHECK_THROWS(loss_gradient(p, std::vector<GroupSample>{}, LossOptions{}));
  g.advantages.advantages.pop_back();
  CHECK_THROWS(loss_gradient(p, std::vector<GroupSample>{g}, LossOptions{}));
}

TEST_CASE("adam", "[policy]") {
  PolicyParams p(PolicyDims{2, 1, 1});
  for (auto& x : p.data) x = 1.0;
  const AdamConfig cfg;
  const std::vector<double> zero(p.data.size(), 0.0);

  AdamState s;
  s.m.assign(p.data.size(), 0.5);
  s.v.assign(p.data.size(), 0.25);
  s.t = 3;
  const auto z = optimizer_step(p, zero, s, cfg);
  CHECK(z.state.m[0] == 0.9 * 0.5);
  CHECK(z.state.v[0] == 0.999 * 0.25);
  const auto fresh = optimizer_step(p, zero, AdamState{}, cfg);
  CHECK(fresh.params == p);

  std::vector<double> g(p.data.size(), 0.3);
  const auto a = optimizer_step(p, g, s, cfg), b = optimizer_step(p, g, s, cfg);
  CHECK(a.params == b.params);
  CHECK(a.state == b.state);

  // f(x) = x^2 from x = 1
  PolicyParams x(PolicyDims{1, 1, 1});
  std::fill(x.data.begin(), x.data.end(), 1.0);
  std::vector<double> grad(x.data.size());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = 2.0 * x.data[k];
  const auto step = optimizer_step(x, grad, AdamState{}, cfg);
  CHECK(step.params.data[0] < 1.0);
  CHECK(step.params.data[0] == Approx(1.0 - cfg.lr).epsilon(1e-9));
  CHECK_THROWS(optimizer_step(x, std::vector<double>(1), AdamState{}, cfg));
}
