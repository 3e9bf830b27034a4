#pragma once

#include <cstdint>
#include <initializer_list>

namespace hexreg {

/// Counter-based generator: the i-th draw of a stream is splitmix64(key + i * golden).
///
/// Streams are identified by a key derived from the root seed and a path of
/// integers (for example {level, superclass, class, sample}), so every draw is a
/// pure function of (seed, path, counter). Uniform doubles take the top 53 bits;
/// normal draws consume two uniforms through Box-Muller and keep only the cosine
/// branch. Both rules are simple enough to replicate bit-for-bit in any language.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  CounterRng() = default;
  CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
  }

  /// Key for the stream at `path` below `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t k = mix(seed + kGolden);
    for (std::uint64_t p : path) k = mix(k ^ mix(p + kGolden));
    return k;
  }

  static CounterRng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    return CounterRng(derive(seed, path));
  }

  std::uint64_t next_u64() noexcept { return mix(key_ + (counter_++ + 1) * kGolden); }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cosine branch).
  double normal() noexcept;

  /// Uniform integer on [0, n), by rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace hexreg
