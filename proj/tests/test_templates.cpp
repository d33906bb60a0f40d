#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>

#include "pagrpo/format_rewards.hpp"
#include "pagrpo/rng.hpp"
#include "pagrpo/templates.hpp"

using namespace pagrpo;

namespace {

std::size_t occurrences(const std::string& hay, const std::string& needle) { return count_occurrences(hay, needle); }

}  // namespace

TEST_CASE("builtin catalog shape", "[templates]") {
  const auto set = load_builtin_templates();
  REQUIRE(set.size() == 13);
  const auto counts = set.category_counts();
  CHECK(counts.at(Category::freeform) == 4);
  CHECK(counts.at(Category::explicit_cot) == 3);
  CHECK(counts.at(Category::deepseek_style) == 4);
  CHECK(counts.at(Category::reflection) == 2);

  std::size_t tf_deepseek = 0, tf_reflection = 0;
  for (const auto& t : set) {
    if (!t.teacher_forced()) continue;
    if (t.category == Category::deepseek_style) ++tf_deepseek;
    if (t.category == Category::reflection) ++tf_reflection;
  }
  CHECK(tf_deepseek == 2);
  CHECK(tf_reflection == 1);
}

TEST_CASE("builtin rows", "[templates]") {
  const auto set = load_builtin_templates();
  const auto& first = set[0];
  CHECK(first.system_text.find("Please reason step by step, and put your final answer within") != std::string::npos);
  CHECK(first.assistant_prefix == "Let's think step by step.");
  CHECK(first.category == Category::explicit_cot);

  const auto& tf = set.find("deepseek_newline_tf");
  CHECK(tf.assistant_prefix == "<think>\n");
  CHECK(tf.category == Category::deepseek_style);
  CHECK(format_rule(tf.reward_id).share == 1.0 / 3.0);

  CHECK(set.find("deepseek_plain_tf").assistant_prefix == "<think>");
  CHECK(set.find("reflection_tf").assistant_prefix == "<solution>");
  CHECK(set.find("reflection").system_text.find("<check>\nLet's verify step by step ...\n</check>") != std::string::npos);

  std::map<std::string, int> bindings;
  for (const auto& t : set) ++bindings[t.reward_id];
  CHECK(bindings["lm_eval_final_answer"] == 2);
  CHECK(bindings["constant_one"] == 5);
  for (const char* id : {"deepseek_r1_newline", "deepseek_r1_newline_tf", "deepseek_r1_plain", "deepseek_r1_plain_tf",
                         "reflection", "reflection_tf"})
    CHECK(bindings[id] == 1);
}

TEST_CASE("teacher-forced rewards never score the forced opening tag", "[templates]") {
  for (const auto& t : load_builtin_templates()) {
    if (!t.teacher_forced()) continue;
    for (const auto& m : format_rule(t.reward_id).markers) {
      INFO(t.id << " marker " << m);
      CHECK(t.assistant_prefix.find(m) == std::string::npos);
    }
  }
}

TEST_CASE("render framing", "[templates]") {
  const auto set = load_builtin_templates();
  const auto p = render(set.find("qwen_freeform"), "1+1=?");
  CHECK(p.full_text.find("You are a helpful assistant.") != std::string::npos);
  CHECK(p.full_text.find("Please reason step by step, and put your final answer within") != std::string::npos);
  CHECK(p.full_text.find("<|im_start|>assistant") != std::string::npos);
  CHECK(p.completion_offset == p.full_text.size());
  CHECK(p.full_text.ends_with("<|im_start|>assistant\n"));
  CHECK(p.full_text ==
        "<|im_start|>system\nYou are a helpful assistant.<|im_end|>\n<|im_start|>user\n1+1=?\nPlease reason step by "
        "step, and put your final answer within \\boxed{}.<|im_end|>\n<|im_start|>assistant\n");

  const auto r = render(set.find("reflection_tf"), "2+2=?");
  CHECK(r.full_text.ends_with("<solution>"));
  CHECK(r.completion_offset == r.full_text.size());
  CHECK_THROWS_AS(render(set[0], ""), std::invalid_argument);
}

TEST_CASE("question appears exactly once", "[templates]") {
  Rng rng(5);
  for (const auto& t : load_builtin_templates()) {
    for (int n = 0; n < 50; ++n) {
      std::string q = std::to_string(rng.below(100)) + "+" + std::to_string(rng.below(100)) + "=?#" +
                      std::to_string(rng.next());
      CHECK(occurrences(render(t, q).full_text, q) == 1);
    }
  }
}

TEST_CASE("template sampling is uniform and reproducible", "[templates]") {
  const auto set = load_builtin_templates();
  Rng a(42), b(42);
  std::map<std::string, std::size_t> freq;
  const std::size_t n = 130000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = sample_template(set, a);
    CHECK(&t == &sample_template(set, b));
    ++freq[t.id];
  }
  REQUIRE(freq.size() == 13);
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / 13.0;
  for (const auto& [id, c] : freq) {
    CHECK(std::abs(static_cast<double>(c) / static_cast<double>(n) - 1.0 / 13.0) < 0.01);
    chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  }
  CHECK(chi2 < 32.9);  // 99.9th percentile, 12 degrees of freedom

  const TemplateSet one({set[3]});
  Rng r(1);
  for (int i = 0; i < 20; ++i) CHECK(sample_template(one, r).id == set[3].id);
  CHECK_THROWS(sample_template(TemplateSet{}, r));
}

TEST_CASE("template file round trip", "[templates]") {
  const auto set = load_builtin_templates();
  const auto parsed = parse_templates(write_templates(set));
  REQUIRE(parsed.size() == set.size());
  for (std::size_t i = 0; i < set.size(); ++i) CHECK(parsed[i] == set[i]);
  CHECK(parsed.hash() == set.hash());
}

TEST_CASE("template file parsing", "[templates]") {
  const auto one = parse_templates(
      "id: t1\ncategory: freeform\nreward: constant_one\nsystem<<EOF\nline one\n\nline three\nEOF\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0].system_text == "line one\n\nline three");
  CHECK(one[0].user_prefix.empty());

  const std::string dup = "id: t1\ncategory: freeform\nreward: constant_one\n---\nid: t1\ncategory: freeform\nreward: constant_one\n";
  CHECK_THROWS_WITH(parse_templates(dup), Catch::Matchers::ContainsSubstring("duplicate") &&
                                              Catch::Matchers::ContainsSubstring("line 5"));
  CHECK_THROWS_WITH(parse_templates("id: t1\ncategory: freeform\nreward: nope\n"),
                    Catch::Matchers::ContainsSubstring("nope"));
  CHECK_THROWS_WITH(parse_templates("id: t1\ncategory: freeform\nreward: constant_one\nsystem<<EOF\nx\n"),
                    Catch::Matchers::ContainsSubstring("line 4"));
  CHECK_THROWS_WITH(parse_templates("id: t1\ncategory: weird\nreward: constant_one\n"),
                    Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(parse_templates("id: t1\nreward: constant_one\n"), Catch::Matchers::ContainsSubstring("category"));
  CHECK_THROWS_WITH(parse_templates("just text\n"), Catch::Matchers::ContainsSubstring("line 1"));
  CHECK_THROWS(load_templates_from_file("/nonexistent/templates.txt"));
}
