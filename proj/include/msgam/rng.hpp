#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace msgam {

/// Philox4x32-10 counter-based generator.
///
/// The key is derived from a seed and the counter's upper half from a stream
/// id, so independent streams can be handed to parallel workers without any
/// shared state: the draws of stream (seed, id) never depend on how many other
/// streams exist or on the order in which they are consumed.
///
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == 2) {
      refill();
    }
    return buffer_[used_++];
  }

  /// Child generator for a sub-task; deterministic in (seed, stream, child).
  [[nodiscard]] Philox split(std::uint64_t child) const noexcept {
    return Philox(mix(static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32)) ^ child,
                  mix(stream_ + 0x9E3779B97F4A7C15ULL * (child + 1)));
  }

  /// Stream for job (a, b) under a top-level seed.
  [[nodiscard]] static Philox for_job(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return Philox(seed, mix(mix(a + 0x632BE59BD9B4E019ULL) ^ (b * 0xD1B54A32D192ED03ULL)));
  }

  /// SplitMix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  void refill() noexcept {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                     static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53U) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57U) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9U;
      key[1] += 0xBB67AE85U;
    }
    ++counter_;
    buffer_[0] = static_cast<std::uint64_t>(ctr[0]) | (static_cast<std::uint64_t>(ctr[1]) << 32);
    buffer_[1] = static_cast<std::uint64_t>(ctr[2]) | (static_cast<std::uint64_t>(ctr[3]) << 32);
    used_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
};

}  // namespace msgam
