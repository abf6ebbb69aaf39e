#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace bbvel {

// Mixes a master seed with stream coordinates (sample index, retry, purpose)
// into an independent 64-bit seed. Pure function of its arguments.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; the distributions below are written out explicitly because
// the standard library leaves theirs implementation-defined, which would break
// cross-platform reproducibility of generated datasets.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace bbvel
