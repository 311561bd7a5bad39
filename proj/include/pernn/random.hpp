#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pernn {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent seed for a named stream ("data", "init", "shuffle",
// "gaps", ...) so that components can be re-seeded without disturbing others.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::string_view stream) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(root ^ mix64(h));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(stream_seed(root, stream));
}

}  // namespace pernn
