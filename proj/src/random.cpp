#include "nnbpe/random.hpp"

#include <algorithm>

#include "nnbpe/errors.hpp"

namespace nnbpe {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

namespace {
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

CategoricalSampler::CategoricalSampler(std::span<const double> probabilities) {
  if (probabilities.empty()) throw InvalidArgument("CategoricalSampler: no categories");
  cdf_.reserve(probabilities.size());
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw InvalidArgument("CategoricalSampler: negative or NaN probability");
    total += p;
    cdf_.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidArgument("CategoricalSampler: zero total probability");
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

int CategoricalSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  // First index whose cumulative mass exceeds u; zero-probability categories are never hit.
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1));
}

}  // namespace nnbpe
