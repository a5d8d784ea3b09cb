#pragma once

#include <cstdint>
#include <limits>

namespace irfkit {

/// SplitMix64 output finalizer (Stafford variant 13).
[[nodiscard]] constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Seed of substream `stream_index` under `master_seed`:
///
///     mix(master_seed ^ (stream_index * 0x9E3779B97F4A7C15))
///
/// with `mix` the SplitMix64 finalizer and wrapping 64-bit multiplication.
[[nodiscard]] constexpr std::uint64_t substream_seed(std::uint64_t master_seed,
                                                     std::uint64_t stream_index) noexcept {
  return splitmix64_mix(master_seed ^ (stream_index * kGoldenGamma));
}

/// Deterministic, splittable random stream.
///
/// The generator is SplitMix64 started from `substream_seed(master, index)`:
/// each draw adds the golden gamma to the state and returns the mixed state.
/// Uniform doubles use the top 53 bits: `(u64 >> 11) * 2^-53`, in [0, 1).
/// Any implementation following these three rules reproduces every stream
/// bit for bit.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t master_seed, std::uint64_t stream_index) noexcept
      : master_seed_(master_seed),
        stream_index_(stream_index),
        state_(substream_seed(master_seed, stream_index)) {}

  [[nodiscard]] std::uint64_t master_seed() const noexcept { return master_seed_; }
  [[nodiscard]] std::uint64_t stream_index() const noexcept { return stream_index_; }

  std::uint64_t next_u64() noexcept {
    state_ += kGoldenGamma;
    return splitmix64_mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() noexcept;

  /// Uniform integer in [0, n) by rejection (n > 0).
  std::uint64_t below(std::uint64_t n) noexcept;

  // UniformRandomBitGenerator interface, so the stream works with <algorithm>.
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept { return next_u64(); }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::uint64_t state_;
};

}  // namespace irfkit
