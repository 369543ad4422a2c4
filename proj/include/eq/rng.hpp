#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace eq {

/// Deterministic xoshiro256++ generator seeded through splitmix64.
///
/// The integer stream is identical on every platform for a given seed,
/// which is what checkpoint / dataset reproducibility relies on. Gaussian
/// variates use the polar method so no trigonometric library calls are
/// involved.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256++";

  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
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

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal variate (Marsaglia polar method).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // 128-bit multiply keeps the draw unbiased enough for constellation picks.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Independent child stream; deterministic in (seed, stream_id).
  Rng stream(std::uint64_t stream_id) const {
    std::uint64_t s = seed_;
    std::uint64_t a = splitmix64(s);
    std::uint64_t mix = a ^ (stream_id + 0x9E3779B97F4A7C15ULL);
    return Rng(splitmix_once(mix));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    return splitmix_once(state);
  }

  static std::uint64_t splitmix_once(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eq
