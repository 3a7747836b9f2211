#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vaecp {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState adam_init(std::size_t param_count, double alpha);

/// One bias-corrected Adam step, descending `grads` (the gradient of the loss).
/// Updates state and params in place; throws on a length mismatch or a
/// non-finite gradient without modifying either.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace vaecp
