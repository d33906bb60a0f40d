#pragma once

// Answer extraction and a limited canonical equivalence checker: integers,
// fractions and finite decimals compare as exact rationals, everything else
// compares as a normalized string.

#include <charconv>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace pagrpo {

// Contents of the last "\boxed{...}" with balanced braces.
inline std::optional<std::string> extract_boxed(std::string_view completion) {
  static constexpr std::string_view open = "\\boxed{";
  const auto start = completion.rfind(open);
  if (start == std::string_view::npos) return std::nullopt;
  const std::size_t body = start + open.size();
  int depth = 1;
  for (std::size_t i = body; i < completion.size(); ++i) {
    if (completion[i] == '{') {
      ++depth;
    } else if (completion[i] == '}') {
      if (--depth == 0) return std::string(completion.substr(body, i - body));
    }
  }
  return std::nullopt;
}

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;  // > 0, gcd(num, den) == 1
  bool operator==(const Rational&) const = default;
};

using Canonical = std::variant<Rational, std::string>;

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline void erase_all(std::string& s, std::string_view what) {
  for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos)) s.erase(pos, what.size());
}

inline std::optional<Rational> make_rational(__int128 num, __int128 den) {
  if (den == 0) return std::nullopt;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  __int128 a = num < 0 ? -num : num;
  __int128 b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  constexpr __int128 lim = INT64_MAX;
  if (num > lim || num < -lim || den > lim) return std::nullopt;
  return Rational{static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
}

// [+-]digits[.digits] or [+-].digits, at most 18 significant digits.
inline std::optional<Rational> parse_decimal(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  __int128 num = 0;
  __int128 den = 1;
  bool seen_dot = false;
  int digits = 0;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
      continue;
    }
    if (c < '0' || c > '9') return std::nullopt;
    if (++digits > 18) return std::nullopt;
    num = num * 10 + (c - '0');
    if (seen_dot) den *= 10;
  }
  if (digits == 0) return std::nullopt;
  return make_rational(neg ? -num : num, den);
}

inline std::optional<Rational> divide(const Rational& a, const Rational& b) {
  return make_rational(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
}

inline std::optional<Rational> parse_frac(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  static constexpr std::string_view cmd = "\\frac{";
  if (!s.starts_with(cmd) || !s.ends_with("}")) return std::nullopt;
  s.remove_prefix(cmd.size());
  s.remove_suffix(1);
  const auto mid = s.find("}{");
  if (mid == std::string_view::npos) return std::nullopt;
  auto a = parse_decimal(s.substr(0, mid));
  auto b = parse_decimal(s.substr(mid + 2));
  if (!a || !b) return std::nullopt;
  auto q = divide(*a, *b);
  if (q && neg) q->num = -q->num;
  return q;
}

inline std::optional<Rational> parse_slash(std::string_view s) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto a = parse_decimal(s.substr(0, slash));
  auto b = parse_decimal(s.substr(slash + 1));
  if (!a || !b || a->den != 1 || b->den != 1) return std::nullopt;
  return divide(*a, *b);
}

}  // namespace detail

inline std::string normalize_answer_text(std::string_view raw) {
  std::string s(detail::trim(raw));
  detail::erase_all(s, "$");
  detail::erase_all(s, "\\left");
  detail::erase_all(s, "\\right");
  return std::string(detail::trim(s));
}

inline Canonical canonicalize(std::string_view raw) {
  const std::string s = normalize_answer_text(raw);
  if (auto r = detail::parse_decimal(s)) return *r;
  if (auto r = detail::parse_slash(s)) return *r;
  if (auto r = detail::parse_frac(s)) return *r;
  return s;
}

inline std::string to_string(const Canonical& c) {
  if (const auto* r = std::get_if<Rational>(&c)) {
    return r->den == 1 ? std::to_string(r->num) : std::to_string(r->num) + "/" + std::to_string(r->den);
  }
  return std::get<std::string>(c);
}

struct GoldAnswer {
  std::string raw;
  Canonical canonical;

  GoldAnswer() : canonical(std::string{}) {}
  explicit GoldAnswer(std::string r) : raw(std::move(r)), canonical(canonicalize(raw)) {}
};

inline double verify_answer(std::string_view predicted, const GoldAnswer& gold) {
  return canonicalize(predicted) == gold.canonical ? 1.0 : 0.0;
}

// Accuracy of a full completion: boxed extraction followed by verification.
inline double accuracy_reward(std::string_view completion, const GoldAnswer& gold) {
  const auto boxed = extract_boxed(completion);
  return boxed ? verify_answer(*boxed, gold) : 0.0;
}

}  // namespace pagrpo
