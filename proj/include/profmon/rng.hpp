#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace profmon {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to turn (parent seed, stream ids) into
// statistically independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> stream) noexcept {
  std::uint64_t s = mix64(parent);
  for (auto v : stream) s = mix64(s ^ mix64(v + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags keep seeds for different purposes apart.
namespace stream {
inline constexpr std::uint64_t fit = 1;
inline constexpr std::uint64_t draw = 2;
inline constexpr std::uint64_t historical = 3;
inline constexpr std::uint64_t trial = 4;
inline constexpr std::uint64_t calibration = 5;
inline constexpr std::uint64_t set = 6;
inline constexpr std::uint64_t snr = 7;
inline constexpr std::uint64_t tree = 8;
}  // namespace stream

}  // namespace profmon
