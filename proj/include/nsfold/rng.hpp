#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace nsfold {

// Seedable, splittable random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard's distributions are not (their algorithms are
// implementation-defined), so uniform, normal and index draws are derived
// here from raw engine words. Same seed, same numbers, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent child stream keyed by `stream`; the parent is not advanced.
  [[nodiscard]] Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via the Box-Muller transform (pairs are cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, bound) by rejection, no modulo bias.
  std::size_t index(std::size_t bound);

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids used for per-trial substreams.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kDropout = 3;
inline constexpr std::uint64_t kGradcheck = 4;
}  // namespace streams

}  // namespace nsfold
