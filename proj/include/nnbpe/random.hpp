#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace nnbpe {

/// Seeded pseudo-random source with platform-independent derived draws.
///
/// std::mt19937_64 output is fixed by the standard, but the distribution
/// adaptors are not; uniform doubles and bounded integers are therefore
/// derived here so that seeded artifacts are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Deterministically mixes a seed with extra keys (splitmix64 finalizer chain).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Inverse-CDF sampler over a finite categorical distribution.
class CategoricalSampler {
 public:
  explicit CategoricalSampler(std::span<const double> probabilities);

  int sample(Rng& rng) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

}  // namespace nnbpe
