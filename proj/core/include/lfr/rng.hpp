#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lfr {

/// SplitMix64 finalizer. Bijective mix of a 64-bit word.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output(i) = splitmix64_mix(key + i * GOLDEN).
///
/// The key is derived from (seed, stream label, indices), so every consumer
/// of randomness in a run owns an independent stream addressed by name. The
/// integer stream is bit-exact across platforms and languages; see README
/// for the u64 -> float and Gaussian recipes.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  /// Root key for a run: mix the seed against a stream label.
  static CounterRng from_seed(std::uint64_t seed, std::string_view stream);

  CounterRng derive(std::string_view stream) const;
  CounterRng derive(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0,1) with 53 random bits.
  double next_double();
  /// Uniform in [0,1) with 24 random bits.
  float next_float();
  float uniform(float lo, float hi);
  /// Standard normal via Box-Muller on two next_double() draws.
  float normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n);

  /// Seeded Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::int64_t> permutation(std::int64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

/// FNV-1a 64-bit digest over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xCBF29CE484222325ULL);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace lfr
