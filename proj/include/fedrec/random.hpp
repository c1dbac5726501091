#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedrec {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Labeled sub-seed: hash(seed, label, a, b). Used so that every consumer of
/// randomness (split, init, client sampling, per-client streams) gets an
/// independent stream that does not depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = splitmix64(seed ^ h);
  x = splitmix64(x ^ a);
  x = splitmix64(x ^ (b * 0x9e3779b97f4a7c15ULL));
  return x;
}

inline Rng make_rng(std::uint64_t seed, std::string_view label,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(seed, label, a, b));
}

}  // namespace fedrec
