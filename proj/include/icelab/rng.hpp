#pragma once

// Deterministic random streams. Chains draw from xoshiro256++ seeded through
// splitmix64; coupling from the past uses a stateless counter-based hash so
// that the bits of any (seed, sweep, site) can be regenerated on demand.

#include <array>
#include <cstdint>
#include <limits>

namespace icelab {

/// splitmix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of chain `chain_id` in an ensemble seeded with `seed`:
/// seed XOR mix64(chain_id).
constexpr std::uint64_t derive_chain_seed(std::uint64_t seed, std::uint64_t chain_id) noexcept {
  return seed ^ mix64(chain_id);
}

/// Counter-based 64-bit word for (seed, a, b). Used by CFTP with a = sweep
/// number into the past and b = word index within the sweep.
constexpr std::uint64_t counter_word(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(seed ^ mix64(a)) + b);
}

class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& s : state_) {
      z += 0x9e3779b97f4a7c15ULL;
      s = mix64(z);
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  const std::array<std::uint64_t, 4>& state() const { return state_; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

/// Hands out one fair bit at a time from a 64-bit generator.
class BitStream {
 public:
  explicit BitStream(std::uint64_t seed) : rng_(seed) {}

  bool next() noexcept {
    if (left_ == 0) {
      word_ = rng_();
      left_ = 64;
    }
    const bool bit = (word_ & 1U) != 0;
    word_ >>= 1;
    --left_;
    return bit;
  }

  std::uint64_t word() noexcept { return rng_(); }

 private:
  Xoshiro256pp rng_;
  std::uint64_t word_ = 0;
  int left_ = 0;
};

}  // namespace icelab
