#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace psnet {

/// SplitMix64 finalizer; used to derive independent substream seeds from one root seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Substream identifiers under a run's root seed.
enum class Stream : std::uint64_t { Init = 1, Dropout = 2, Shuffle = 3, Synthetic = 4 };

/// Seedable generator with bit-identical output on every platform.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++ standard.
/// The standard distributions are implementation-defined, so every variate below is
/// derived from raw engine output by hand.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  Rng substream(Stream s) const { return Rng(derive_seed(seed_, static_cast<std::uint64_t>(s))); }
  Rng substream(Stream s, std::uint64_t index) const {
    return Rng(derive_seed(derive_seed(seed_, static_cast<std::uint64_t>(s)), index));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next();
    while (x >= limit) {
      x = next();
    }
    return x % n;
  }

  /// Standard normal via Box-Muller (one variate per call).
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(order[i - 1], order[j]);
    }
    return order;
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

} // namespace psnet
