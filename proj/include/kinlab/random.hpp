#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace kinlab {

/// SplitMix64 finalizer; used both for seeding and for stream derivation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ engine. Cheap to seed, so a fresh engine can be built for
/// every (seed, replica, step) tuple.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed) noexcept {
    for (auto& s : state_) {
      seed = mix64(seed);
      s = seed;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

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

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

/// A random stream: engine plus the distributions drawn from it.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : engine_(key) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  Xoshiro256pp& engine() { return engine_; }

 private:
  Xoshiro256pp engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Counter-based stream derivation: the stream for (seed, a, b, c) depends
/// only on those four values, never on execution order.
inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t a,
                                  std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t key = mix64(seed);
  key = mix64(key ^ mix64(a + 0x632be59bd9b4e019ULL));
  key = mix64(key ^ mix64(b + 0x8cb92ba72f3d8dd7ULL));
  key = mix64(key ^ mix64(c + 0xaf251af3b0f025b5ULL));
  return RandomStream(key);
}

}  // namespace kinlab
