#pragma once

#include <cstdint>
#include <limits>

namespace bpre {

// splitmix64, used only to expand seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ (Blackman & Vigna), satisfies uniform_random_bit_generator.
class Xoshiro256PP {
 public:
  using result_type = std::uint64_t;

  Xoshiro256PP() : Xoshiro256PP(0xdeadbeefULL) {}

  explicit Xoshiro256PP(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// A (seed, stream) pair naming an independent family of chunk generators.
// Streams keep the sampling phases of one run (environment draws, population
// draws, auxiliary MC) statistically independent under a single user seed.
struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // Derived stream for a sub-phase; nesting yields distinct streams for
  // distinct derivation paths.
  RngKey sub(std::uint64_t s) const {
    return RngKey{seed, stream * 0x100000001b3ULL + s + 1};
  }
};

// Deterministic generator for chunk `chunk` of the (seed, stream) family.
// Identical regardless of which worker executes the chunk.
inline Xoshiro256PP chunk_rng(const RngKey& key, std::uint64_t chunk) {
  std::uint64_t sm = key.seed;
  std::uint64_t a = splitmix64(sm);
  sm = a ^ (0x9e3779b97f4a7c15ULL * (key.stream + 1));
  std::uint64_t b = splitmix64(sm);
  sm = b ^ (0xc2b2ae3d27d4eb4fULL * (chunk + 1));
  return Xoshiro256PP(splitmix64(sm));
}

}  // namespace bpre
