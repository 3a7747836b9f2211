#pragma once

#include <cstdint>

#include "vaecp/cp.hpp"
#include "vaecp/tensor.hpp"

namespace vaecp {

/// CP tensor of the given factors plus i.i.d. N(0, noise_std^2) noise per entry.
DenseTensor generate_from_factors(const FactorMatrices& factors, double noise_std, std::uint64_t seed);

struct SyntheticTensor {
  DenseTensor tensor;
  FactorMatrices factors;
};

/// Factor rows drawn i.i.d. from N(0, I_rank), then passed to generate_from_factors.
/// Factor draws and noise draws use independent child seeds.
SyntheticTensor generate_synthetic(const Dims& dims, std::size_t rank, double noise_std,
                                   std::uint64_t seed);

}  // namespace vaecp
