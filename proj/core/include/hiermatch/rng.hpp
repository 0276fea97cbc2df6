#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hiermatch {

/// Mixes a seed with a stream index into an independent sub-seed
/// (splitmix64 finalizer). Used to derive per-epoch / per-identity streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded random source with draw rules spelled out here rather than
/// delegated to std::*_distribution, so that identical seeds give identical
/// streams on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on the open interval (0, 1): 53-bit mantissa, never 0 or 1.
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * kInv53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  /// Standard normal via Box-Muller; one spare cached per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Standard Gumbel sample -log(-log(u)).
  double gumbel() { return -std::log(-std::log(uniform01())); }

  std::vector<double> gumbel_vector(std::size_t n) {
    std::vector<double> g(n);
    for (auto& v : g) v = gumbel();
    return g;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hiermatch
