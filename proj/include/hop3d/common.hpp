#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace hop3d {

// Label value for points excluded from the segmentation loss.
inline constexpr int kIgnoreLabel = -1;

// splitmix64 finalizer; derives independent RNG streams from (master, index)
// so parallel generation never changes output.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace hop3d
