#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace vaecp {

/// Seedable generator used by every randomized routine in the library.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions are implemented here rather than taken from
/// <random>, because the standard leaves their algorithms to the library
/// vendor:
///   - uniform01: top 53 bits of one engine draw, scaled by 2^-53.
///   - uniform_index(n): Lemire's multiply-shift with rejection (unbiased).
///   - normal: Marsaglia polar method, caching the second variate.
/// Fixed seed therefore means a bit-identical stream on any conforming
/// toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  std::size_t uniform_index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  void fill_normal(std::span<double> out);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// Child seed for a (parent, a, b) triple, e.g. (batch seed, entry, sample).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) noexcept;

}  // namespace vaecp
