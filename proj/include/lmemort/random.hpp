#pragma once

#include <cstdint>
#include <random>

namespace lmemort {

// Streams used when deriving child seeds from the single root seed.
enum class SeedStream : std::uint32_t {
  CovariatePaths = 1,
  PredictionIntervals = 2,
  LeeCarterPaths = 3,
  LiLeePaths = 4,
  Solvency = 5,
};

// Engine for replicate `index` of `stream`. The mapping is a pure function of
// its arguments, so results do not depend on evaluation order.
inline std::mt19937_64 make_engine(std::uint64_t root, SeedStream stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace lmemort
