#pragma once

#include <cstdint>
#include <random>

namespace tate::rng {

/// Stream identifiers. Every random consumer draws from
/// derive_seed(root, stream, index), so work can be scheduled in any order
/// (or in parallel) and still replay bit-for-bit.
enum class Stream : std::uint64_t {
  resample = 1,     // index: unused
  kfold = 2,        // index: unused
  bootstrap = 3,    // index: replicate number
  simulation = 4,   // index: replication number
  calibration = 5,  // index: see calibration.hpp
  subsample = 6,    // index: caller defined
};

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Engine engine(std::uint64_t root, Stream stream, std::uint64_t index = 0) {
  return Engine{derive_seed(root, stream, index)};
}

}  // namespace tate::rng
