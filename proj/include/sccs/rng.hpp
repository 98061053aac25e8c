#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace sccs {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, used to turn stream labels into keys.
constexpr std::uint64_t hash_label(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: the k-th output is mix64(key + k * golden).
// Streams are split by deriving independent keys, so any (seed, label, index)
// triple names a reproducible sequence independent of evaluation order.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}

  CounterRng(std::uint64_t seed, std::string_view label, std::uint64_t a = 0,
             std::uint64_t b = 0) noexcept
      : key_(derive(seed, label, a, b)) {}

  static constexpr std::uint64_t derive(std::uint64_t seed, std::string_view label,
                                        std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
    std::uint64_t k = mix64(seed ^ 0x5851f42d4c957f2dULL);
    k = mix64(k ^ hash_label(label));
    k = mix64(k + a * kGolden);
    return mix64(k ^ (b + 0x2545f4914f6cdd1dULL));
  }

  std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_pos() noexcept { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % bound;
  }

  // Standard complex Gaussian CN(0,1): E|z|^2 = 1. Box-Muller on one pair.
  std::complex<double> complex_normal() noexcept {
    const double radius = std::sqrt(-std::log(uniform_pos()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> random_permutation(std::size_t n, CounterRng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// m distinct indices from [0, n), in random order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m,
                                                           CounterRng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace sccs
