#pragma once

// Toy vocabulary with atomic structural tokens. Each format-reward marker
// string either is, or is contained in, exactly one token surface, and no
// marker can straddle a token boundary, so marker counts on decoded text
// equal counts taken directly on token ids.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagrpo/format_rewards.hpp"
#include "pagrpo/templates.hpp"

namespace pagrpo {

using TokenId = std::uint32_t;

class Vocabulary {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId bos = 1;
  static constexpr TokenId eos = 2;
  static constexpr std::size_t max_size = 64;

  // Core tokens (specials, digits, question operators, structural markers,
  // one cue token per template) followed by filler tokens up to `size`.
  // size == 0 selects the default of 48, or the core size if larger.
  Vocabulary(const TemplateSet& templates, std::size_t size = 0) {
    surfaces_ = {"", "", ""};
    for (char d = '0'; d <= '9'; ++d) surfaces_.emplace_back(1, d);
    for (const char* op : {"+", "-", "*", "=", "?", " mod "}) surfaces_.emplace_back(op);
    for (const char* m : structural_surfaces()) surfaces_.emplace_back(m);
    first_cue_ = static_cast<TokenId>(surfaces_.size());
    for (const auto& t : templates) surfaces_.push_back("[" + t.id + "]");
    const std::size_t core = surfaces_.size();
    if (size == 0) size = std::max<std::size_t>(48, core);
    if (size < core) throw std::invalid_argument("vocab_size " + std::to_string(size) + " below core size " + std::to_string(core));
    if (size > max_size) throw std::invalid_argument("vocab_size " + std::to_string(size) + " exceeds " + std::to_string(max_size));
    const auto& fill = filler_surfaces();
    if (size - core > fill.size()) throw std::invalid_argument("vocab_size too large for the filler pool");
    for (std::size_t i = 0; core + i < size; ++i) surfaces_.emplace_back(fill[i]);
    n_cues_ = templates.size();
  }

  std::size_t size() const { return surfaces_.size(); }
  const std::string& surface(TokenId id) const { return surfaces_.at(id); }
  const std::vector<std::string>& surfaces() const { return surfaces_; }

  TokenId cue(std::size_t template_index) const {
    if (template_index >= n_cues_) throw std::out_of_range("no cue token for template index");
    return first_cue_ + static_cast<TokenId>(template_index);
  }

  TokenId id_of(std::string_view surface) const {
    for (std::size_t i = 3; i < surfaces_.size(); ++i)
      if (surfaces_[i] == surface) return static_cast<TokenId>(i);
    throw std::out_of_range("no token with surface '" + std::string(surface) + "'");
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (auto id : ids) {
      if (id >= surfaces_.size()) throw std::out_of_range("token id out of range");
      out += surfaces_[id];
    }
    return out;
  }

  // Minimum-token segmentation of `text` into non-special surfaces.
  std::vector<TokenId> encode(std::string_view text) const {
    const std::size_t n = text.size();
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best(n + 1, inf);
    std::vector<TokenId> choice(n + 1, 0);
    best[n] = 0;
    for (std::size_t pos = n; pos-- > 0;) {
      for (std::size_t id = 3; id < surfaces_.size(); ++id) {
        const auto& s = surfaces_[id];
        if (s.empty() || s.size() > n - pos || best[pos + s.size()] == inf) continue;
        if (text.compare(pos, s.size(), s) != 0) continue;
        if (best[pos + s.size()] + 1 < best[pos]) {
          best[pos] = best[pos + s.size()] + 1;
          choice[pos] = static_cast<TokenId>(id);
        }
      }
    }
    if (best[0] == inf) throw std::invalid_argument("text not encodable: '" + std::string(text) + "'");
    std::vector<TokenId> out;
    for (std::size_t pos = 0; pos < n; pos += surfaces_[choice[pos]].size()) out.push_back(choice[pos]);
    return out;
  }

  // Marker count computed on ids alone: occurrences inside each surface.
  std::size_t count_marker(std::span<const TokenId> ids, std::string_view marker) const {
    std::size_t n = 0;
    for (auto id : ids) n += count_occurrences(surface(id), marker);
    return n;
  }

  // FNV-1a over all surfaces.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : surfaces_) {
      for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
      h = (h ^ 0xff) * 0x100000001b3ULL;
    }
    return h;
  }

  static const std::vector<const char*>& structural_surfaces() {
    static const std::vector<const char*> s = {
        "<think>\n",     "\n</think>\n",   "\n<answer>\n",
        "\n</answer>",   "<solution>\n",   "\n</solution>\n",
        "\n<check>\n Let's verify step by step", "\n</check>",
        "The final answer is:", "\\boxed{", "}",
    };
    return s;
  }

  static const std::vector<const char*>& filler_surfaces() {
    static const std::vector<const char*> f = {
        "\n", " ", " so", " wait", " ok", " then", " thus", " hmm", " step", " next", " is",
        " we", " get", " now", " add", " sum", " carry", ",", ";", "(", ")",
    };
    return f;
  }

 private:
  std::vector<std::string> surfaces_;
  TokenId first_cue_ = 0;
  std::size_t n_cues_ = 0;
};

}  // namespace pagrpo
