#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace protomil {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent substream seed from a root seed and a path of tags,
// e.g. derive_seed(seed, {repeat, fold}). Distinct paths give unrelated seeds.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t tag : path) s = mix64(s ^ mix64(tag + 0x632be59bd9b4e019ULL));
  return s;
}

// Substream tags used across the library.
namespace stream {
inline constexpr std::uint64_t kFoldAssignment = 1;
inline constexpr std::uint64_t kFoldTraining = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kEpochShuffle = 4;
}  // namespace stream

}  // namespace protomil
