#pragma once

// Independent brute-force reference implementations used by the unit and
// acceptance suites. Written as plain scalar loops with explicit branches;
// they share no code with the library beyond its data types.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pagrpo/policy.hpp"
#include "pagrpo/rng.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline std::vector<double> advantages(const std::vector<double>& r, double eps_std) {
  const std::size_t g = r.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < g; ++i) mean += r[i];
  mean = mean / static_cast<double>(g);
  double ss = 0.0;
  for (std::size_t i = 0; i < g; ++i) ss += (r[i] - mean) * (r[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(g));
  std::vector<double> a(g, 0.0);
  if (sd < eps_std || sd == 0.0) return a;
  for (std::size_t i = 0; i < g; ++i) a[i] = (r[i] - mean) / sd;
  return a;
}

inline Rows ratios(const Rows& new_lp, const Rows& old_lp) {
  Rows out = new_lp;
  for (std::size_t i = 0; i < new_lp.size(); ++i)
    for (std::size_t t = 0; t < new_lp[i].size(); ++t) out[i][t] = std::exp(new_lp[i][t] - old_lp[i][t]);
  return out;
}

inline double surrogate(double r, double a, double eps_low, double eps_high) {
  double c = r;
  if (c < 1.0 - eps_low) c = 1.0 - eps_low;
  if (c > 1.0 + eps_high) c = 1.0 + eps_high;
  const double unclipped = r * a;
  const double clipped = c * a;
  return clipped < unclipped ? clipped : unclipped;
}

inline double kl(double new_lp, double ref_lp) {
  const double ratio = std::exp(ref_lp - new_lp);
  return ratio - std::log(ratio) - 1.0;
}

// Mean over groups of (1/sum|o_i|) * sum_i sum_t (s - beta d); or, with
// global = true, one normalizer over the whole batch.
inline double loss(const std::vector<Rows>& s, const std::vector<Rows>& d, double beta, bool global = false) {
  double batch_sum = 0.0, batch_tokens = 0.0, mean_acc = 0.0;
  for (std::size_t g = 0; g < s.size(); ++g) {
    double sum = 0.0, tokens = 0.0;
    for (std::size_t i = 0; i < s[g].size(); ++i)
      for (std::size_t t = 0; t < s[g][i].size(); ++t) {
        const double pen = d.empty() || d[g].empty() ? 0.0 : d[g][i][t];
        sum += s[g][i][t] - beta * pen;
        tokens += 1.0;
      }
    mean_acc += sum / tokens;
    batch_sum += sum;
    batch_tokens += tokens;
  }
  return global ? batch_sum / batch_tokens : mean_acc / static_cast<double>(s.size());
}

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h += -x * std::log(x);
  return h;
}

inline double aggregate_entropy(const Rows& h) {
  double sum = 0.0, n = 0.0;
  for (const auto& row : h)
    for (double x : row) {
      sum += x;
      n += 1.0;
    }
  return sum / n;
}

// Naive forward pass: returns probabilities at the given temperature.
inline std::vector<double> probs(const pagrpo::PolicyParams& p, const std::vector<pagrpo::TokenId>& ctx, double temp,
                                 std::vector<double>* hidden_out = nullptr) {
  const auto& d = p.dims;
  std::vector<double> hidden(d.hidden);
  for (std::size_t h = 0; h < d.hidden; ++h) {
    double z = p.data[p.b1_offset() + h];
    for (std::size_t j = 0; j < d.context; ++j)
      for (std::size_t v = 0; v < d.vocab; ++v)
        if (ctx[j] == v) z += p.data[h * d.input() + j * d.vocab + v];
    hidden[h] = std::tanh(z);
  }
  std::vector<double> logits(d.vocab);
  double mx = -1e300;
  for (std::size_t v = 0; v < d.vocab; ++v) {
    double z = p.data[p.b2_offset() + v];
    for (std::size_t h = 0; h < d.hidden; ++h) z += p.data[p.w2_offset() + v * d.hidden + h] * hidden[h];
    logits[v] = z / temp;
    if (logits[v] > mx) mx = logits[v];
  }
  double norm = 0.0;
  for (double z : logits) norm += std::exp(z - mx);
  std::vector<double> out(d.vocab);
  for (std::size_t v = 0; v < d.vocab; ++v) out[v] = std::exp(logits[v] - mx) / norm;
  if (hidden_out) *hidden_out = hidden;
  return out;
}

// Gradient of log pi(a | ctx) with respect to every parameter.
inline std::vector<double> grad_logp(const pagrpo::PolicyParams& p, const std::vector<pagrpo::TokenId>& ctx,
                                     pagrpo::TokenId a, double temp) {
  const auto& d = p.dims;
  std::vector<double> hidden;
  const auto pr = probs(p, ctx, temp, &hidden);
  std::vector<double> g(p.data.size(), 0.0);
  for (std::size_t v = 0; v < d.vocab; ++v) {
    const double dz = ((v == a ? 1.0 : 0.0) - pr[v]) / temp;
    g[p.b2_offset() + v] = dz;
    for (std::size_t h = 0; h < d.hidden; ++h) g[p.w2_offset() + v * d.hidden + h] = dz * hidden[h];
  }
  for (std::size_t h = 0; h < d.hidden; ++h) {
    double dh = 0.0;
    for (std::size_t v = 0; v < d.vocab; ++v)
      dh += ((v == a ? 1.0 : 0.0) - pr[v]) / temp * p.data[p.w2_offset() + v * d.hidden + h];
    const double dpre = dh * (1.0 - hidden[h] * hidden[h]);
    g[p.b1_offset() + h] = dpre;
    for (std::size_t j = 0; j < d.context; ++j) g[h * d.input() + j * d.vocab + ctx[j]] += dpre;
  }
  return g;
}

inline std::vector<pagrpo::TokenId> window(const std::vector<pagrpo::TokenId>& seq, std::size_t width) {
  std::vector<pagrpo::TokenId> ctx(width, 0);
  for (std::size_t j = 0; j < width && j < seq.size(); ++j) ctx[width - 1 - j] = seq[seq.size() - 1 - j];
  return ctx;
}

}  // namespace oracle
