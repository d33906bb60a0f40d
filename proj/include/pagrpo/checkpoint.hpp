#pragma once

// Binary checkpoints. Little-endian, layout:
//   "PAGRPOCK" u32 version
//   u64 vocab_hash u64 template_hash u64 step
//   str config_text
//   dims (3 x u64) vec params
//   u64 adam_t vec adam_m vec adam_v
//   u8 has_ref [vec ref]
// str = u64 length + bytes, vec = u64 count + f64 values.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pagrpo/policy.hpp"

namespace pagrpo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  std::uint64_t vocab_hash = 0;
  std::uint64_t template_hash = 0;
  std::uint64_t step = 0;
  std::string config_text;
  PolicyParams params;
  AdamState adam;
  std::optional<PolicyParams> ref;
};

namespace detail {

constexpr char ck_magic[8] = {'P', 'A', 'G', 'R', 'P', 'O', 'C', 'K'};
constexpr std::uint32_t ck_version = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void put_vec(std::ostream& out, const std::vector<double>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> get_vec(std::istream& in, std::uint64_t limit) {
  const auto n = get<std::uint64_t>(in);
  if (n > limit) throw std::runtime_error("checkpoint: implausible vector length");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void put_params(std::ostream& out, const PolicyParams& p) {
  put<std::uint64_t>(out, p.dims.vocab);
  put<std::uint64_t>(out, p.dims.context);
  put<std::uint64_t>(out, p.dims.hidden);
  put_vec(out, p.data);
}

inline PolicyParams get_params(std::istream& in) {
  PolicyDims d;
  d.vocab = get<std::uint64_t>(in);
  d.context = get<std::uint64_t>(in);
  d.hidden = get<std::uint64_t>(in);
  if (d.vocab > 4096 || d.context > 4096 || d.hidden > 1u << 16) throw std::runtime_error("checkpoint: bad dimensions");
  PolicyParams p;
  p.dims = d;
  p.data = get_vec(in, d.parameter_count());
  if (p.data.size() != d.parameter_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
  return p;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(detail::ck_magic, sizeof detail::ck_magic);
    detail::put<std::uint32_t>(out, detail::ck_version);
    detail::put<std::uint64_t>(out, ck.vocab_hash);
    detail::put<std::uint64_t>(out, ck.template_hash);
    detail::put<std::uint64_t>(out, ck.step);
    detail::put<std::uint64_t>(out, ck.config_text.size());
    out.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
    detail::put_params(out, ck.params);
    detail::put<std::uint64_t>(out, ck.adam.t);
    detail::put_vec(out, ck.adam.m);
    detail::put_vec(out, ck.adam.v);
    detail::put<std::uint8_t>(out, ck.ref ? 1 : 0);
    if (ck.ref) detail::put_params(out, *ck.ref);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot write checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, detail::ck_magic, sizeof magic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const auto version = detail::get<std::uint32_t>(in);
  if (version != detail::ck_version)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.vocab_hash = detail::get<std::uint64_t>(in);
  ck.template_hash = detail::get<std::uint64_t>(in);
  ck.step = detail::get<std::uint64_t>(in);
  const auto len = detail::get<std::uint64_t>(in);
  if (len > (1u << 24)) throw std::runtime_error("checkpoint: implausible config length");
  ck.config_text.resize(len);
  if (!in.read(ck.config_text.data(), static_cast<std::streamsize>(len)))
    throw std::runtime_error("checkpoint: truncated file");
  ck.params = detail::get_params(in);
  ck.adam.t = detail::get<std::uint64_t>(in);
  ck.adam.m = detail::get_vec(in, ck.params.data.size());
  ck.adam.v = detail::get_vec(in, ck.params.data.size());
  if (detail::get<std::uint8_t>(in)) ck.ref = detail::get_params(in);
  return ck;
}

}  // namespace pagrpo
