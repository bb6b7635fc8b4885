#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace rbclab {

/// Deterministic random stream used everywhere randomness is needed.
///
/// The engine is std::mt19937_64 (fully specified by the standard); the
/// distributions are implemented here rather than taken from <random>
/// because libstdc++/libc++ are free to change distribution algorithms.
/// Given a seed, the draw sequence is reproducible across builds on the
/// same platform.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  std::uint64_t raw() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; never returns 0 (safe for log()).
  double uniform_pos() { return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; second member of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double std) { return mean + std * gaussian(); }

  /// Uniform integer in [0, n). Rejection sampling, bias-free.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// Derive an independent child stream as a pure function of
  /// (construction seed, salt). Mixing is splitmix64 so sibling streams
  /// do not collide even for adjacent salts.
  RandomStream derive(std::uint64_t salt) const {
    std::uint64_t z = seed_ + (salt + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return RandomStream(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rbclab
