#include "vaecp/rng.hpp"

#include <cmath>

#include "vaecp/error.hpp"

namespace vaecp {

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
  require(n > 0, "uniform_index: empty range");
  const auto range = static_cast<std::uint64_t>(n);
  auto product = static_cast<unsigned __int128>(engine_()) * range;
  auto low = static_cast<std::uint64_t>(product);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(engine_()) * range;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::size_t>(product >> 64);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double x, y, s;
  do {
    x = 2.0 * uniform01() - 1.0;
    y = 2.0 * uniform01() - 1.0;
    s = x * x + y * y;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = y * scale;
  has_cached_ = true;
  return x * scale;
}

void Rng::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal();
}

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b) noexcept {
  return mix_seed(mix_seed(mix_seed(parent) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace vaecp
