#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace chns {

// SplitMix64 step, used both as a standalone generator for key derivation
// and to expand user seeds into full engine state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t value) {
  std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL + (value << 6) + (value >> 2));
  std::uint64_t out = splitmix64(state);
  state ^= value;
  return out ^ splitmix64(state);
}

inline std::uint64_t hash_string(std::string_view s) {
  // FNV-1a.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  std::seed_seq seq{splitmix64(state), splitmix64(state), splitmix64(state),
                    splitmix64(state)};
  return std::mt19937_64(seq);
}

// Counter-based stream derivation: the stream for (seed, path...) is
// independent of any other path, so batches/epochs/speakers can be generated
// in any order with identical results.
inline std::uint64_t derive_key(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = seed;
  for (std::uint64_t p : path) key = mix_key(key, p);
  return key;
}

inline std::mt19937_64 derive_rng(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> path) {
  return make_rng(derive_key(seed, path));
}

}  // namespace chns
