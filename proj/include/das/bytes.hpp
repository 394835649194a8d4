#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "das/errors.hpp"

namespace das {

// Fixed-width byte strings are the universal currency: keys, blocks, tags and
// IBLT cell sums are all plain Bytes whose width is dictated by the governing
// parameter set.
using Bytes = std::vector<std::uint8_t>;

inline bool all_zero(const Bytes& b) {
  for (auto x : b)
    if (x != 0) return false;
  return true;
}

inline void xor_into(Bytes& dst, const Bytes& src) {
  if (dst.size() != src.size()) fail(Errc::width_mismatch, "xor of unequal widths");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] ^= src[i];
}

inline std::string to_hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto x : b) {
    out.push_back(digits[x >> 4]);
    out.push_back(digits[x & 0xf]);
  }
  return out;
}

inline Bytes from_hex(std::string_view s) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2 != 0) fail(Errc::malformed_bytes, "odd hex length");
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(s[2 * i]), lo = nibble(s[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(Errc::malformed_bytes, "bad hex digit");
    out[i] = std::uint8_t(hi << 4 | lo);
  }
  return out;
}

// Deterministic across platforms: consumes raw engine words, no distribution.
template <typename Rng>
Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes out(n);
  std::size_t i = 0;
  while (i < n) {
    std::uint64_t word = rng();
    for (int k = 0; k < 8 && i < n; ++k, ++i) out[i] = std::uint8_t(word >> (8 * k));
  }
  return out;
}

}  // namespace das
