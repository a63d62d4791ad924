#include "lfr/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lfr {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

CounterRng CounterRng::from_seed(std::uint64_t seed, std::string_view stream) {
  return CounterRng(splitmix64_mix(seed ^ fnv1a64(stream)));
}

CounterRng CounterRng::derive(std::string_view stream) const {
  return CounterRng(splitmix64_mix(key_ ^ fnv1a64(stream)));
}

CounterRng CounterRng::derive(std::uint64_t index) const {
  return CounterRng(splitmix64_mix(key_ ^ (index * kGolden + 0x1F0A5C3B9E1D7F2BULL)));
}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGolden);
}

double CounterRng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float CounterRng::next_float() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

float CounterRng::uniform(float lo, float hi) {
  return lo + (hi - lo) * next_float();
}

float CounterRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 nudged away from 0 so log stays finite.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 < 1e-300) u1 = 1e-300;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = static_cast<float>(r * std::sin(t));
  have_spare_ = true;
  return static_cast<float>(r * std::cos(t));
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("CounterRng::next_below: n must be > 0");
  return next_u64() % n;
}

std::vector<std::int64_t> CounterRng::permutation(std::int64_t n) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace lfr
