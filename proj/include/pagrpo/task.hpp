#pragma once

// Synthetic verifiable arithmetic questions with integer answers 0-99.
//   difficulty 1: a+b, single digits
//   difficulty 2: a+b or a-b mod 100, two digits
//   difficulty 3: a*b mod 10, single digits

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagrpo/answer.hpp"
#include "pagrpo/rng.hpp"

namespace pagrpo {

struct ToyQuestion {
  std::string text;
  GoldAnswer gold;
  int difficulty = 1;
};

struct DifficultyMix {
  std::array<double, 3> weights{0.4, 0.3, 0.3};

  void validate() const {
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("difficulty mix: weights must be non-negative");
      sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("difficulty mix: weights sum to zero");
  }
};

// "w1,w2,w3"
inline DifficultyMix parse_difficulty_mix(const std::string& s) {
  DifficultyMix mix;
  std::istringstream is(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(is, part, ',')) {
    if (i >= 3) throw std::invalid_argument("difficulty mix: expected three weights");
    std::size_t used = 0;
    mix.weights[i++] = std::stod(part, &used);
    if (used != part.size()) throw std::invalid_argument("difficulty mix: bad weight '" + part + "'");
  }
  if (i != 3) throw std::invalid_argument("difficulty mix: expected three weights");
  mix.validate();
  return mix;
}

inline std::string to_string(const DifficultyMix& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.weights[0] << ',' << m.weights[1] << ',' << m.weights[2];
  return os.str();
}

// Question `index` of the dataset drawn from `seed`; independent of n.
inline ToyQuestion make_question(std::uint64_t seed, std::uint64_t index, const DifficultyMix& mix) {
  Rng rng(derive_seed(seed, {index}));
  const double total = mix.weights[0] + mix.weights[1] + mix.weights[2];
  const double u = rng.uniform() * total;
  const int difficulty = u < mix.weights[0] ? 1 : (u < mix.weights[0] + mix.weights[1] ? 2 : 3);
  ToyQuestion q;
  q.difficulty = difficulty;
  long answer = 0;
  if (difficulty == 1) {
    const long a = static_cast<long>(rng.below(10)), b = static_cast<long>(rng.below(10));
    q.text = std::to_string(a) + "+" + std::to_string(b) + "=?";
    answer = a + b;
  } else if (difficulty == 2) {
    const long a = 10 + static_cast<long>(rng.below(90)), b = 10 + static_cast<long>(rng.below(90));
    const bool add = rng.below(2) == 0;
    q.text = std::to_string(a) + (add ? "+" : "-") + std::to_string(b) + " mod 100=?";
    answer = ((add ? a + b : a - b) % 100 + 100) % 100;
  } else {
    const long a = static_cast<long>(rng.below(10)), b = static_cast<long>(rng.below(10));
    q.text = std::to_string(a) + "*" + std::to_string(b) + " mod 10=?";
    answer = (a * b) % 10;
  }
  q.gold = GoldAnswer(std::to_string(answer));
  return q;
}

inline std::vector<ToyQuestion> gen_dataset(std::uint64_t seed, std::size_t n, const DifficultyMix& mix = {}) {
  if (n < 1) throw std::invalid_argument("gen_dataset: n must be >= 1");
  mix.validate();
  std::vector<ToyQuestion> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_question(seed, i, mix));
  return out;
}

// Seeded per-epoch shuffling with drop-last batching. Batches are addressed
// by a global batch counter, so iteration can resume at any step.
class EpochIterator {
 public:
  EpochIterator(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed)
      : n_(n), batch_(batch_size), seed_(shuffle_seed) {
    if (batch_size == 0 || batch_size > n) throw std::invalid_argument("epoch_iterator: batch_size must be in [1, n]");
  }

  std::size_t batches_per_epoch() const { return n_ / batch_; }
  std::size_t epoch_of(std::size_t step) const { return step / batches_per_epoch(); }

  std::vector<std::size_t> permutation(std::size_t epoch) const {
    std::vector<std::size_t> perm(n_);
    for (std::size_t i = 0; i < n_; ++i) perm[i] = i;
    Rng rng(derive_seed(seed_, {epoch}));
    for (std::size_t i = n_; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    return perm;
  }

  std::vector<std::size_t> batch(std::size_t step) {
    const std::size_t epoch = epoch_of(step);
    if (!cached_ || cached_epoch_ != epoch) {
      perm_ = permutation(epoch);
      cached_epoch_ = epoch;
      cached_ = true;
    }
    const std::size_t b = step % batches_per_epoch();
    return {perm_.begin() + static_cast<std::ptrdiff_t>(b * batch_),
            perm_.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_)};
  }

  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const {
    const auto perm = permutation(epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < batches_per_epoch(); ++b)
      out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b * batch_),
                       perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_));
    return out;
  }

 private:
  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> perm_;
  std::size_t cached_epoch_ = 0;
  bool cached_ = false;
};

inline nlohmann::json to_json(const ToyQuestion& q) {
  return {{"text", q.text}, {"gold", q.gold.raw}, {"difficulty", q.difficulty}};
}

inline ToyQuestion question_from_json(const nlohmann::json& j) {
  ToyQuestion q;
  q.text = j.at("text").get<std::string>();
  const auto& g = j.at("gold");
  q.gold = GoldAnswer(g.is_string() ? g.get<std::string>() : g.dump());
  q.difficulty = j.value("difficulty", 1);
  return q;
}

inline void write_dataset_jsonl(const std::string& path, const std::vector<ToyQuestion>& qs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& q : qs) out << to_json(q).dump() << '\n';
}

inline std::vector<ToyQuestion> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<ToyQuestion> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(question_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pagrpo
