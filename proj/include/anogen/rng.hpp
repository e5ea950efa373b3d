#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace anogen {

// One SplitMix64 step (Steele, Lea & Flood). Advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

// Stage seed derivation: SplitMix64 applied to `seed` xor the 64-bit
// FNV-1a hash of `tag`. Every seeded stage of the pipeline draws its seed
// from the global seed through this function with a fixed tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Deterministic random source.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The distributions below are implemented here rather than taken
// from <random>, because the standard distributions are not required to
// produce identical values across library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer on [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via the Box-Muller cosine branch (one value per call).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates shuffle driven by uniform_index.
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_index(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace anogen
