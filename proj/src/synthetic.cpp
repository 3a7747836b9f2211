#include "vaecp/synthetic.hpp"

#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

DenseTensor generate_from_factors(const FactorMatrices& factors, double noise_std, std::uint64_t seed) {
  require(factors.order() >= 2, "factor set is empty");
  require(noise_std >= 0.0, "noise standard deviation must be non-negative");
  DenseTensor out = reconstruct_full(factors);
  if (noise_std > 0.0) {
    Rng rng(seed);
    for (double& v : out.values()) v += noise_std * rng.normal();
  }
  return out;
}

SyntheticTensor generate_synthetic(const Dims& dims, std::size_t rank, double noise_std,
                                   std::uint64_t seed) {
  require(!dims.empty(), "synthetic tensor needs dims");
  require(rank >= 1, "synthetic rank must be at least 1");
  FactorMatrices factors = FactorMatrices::zeros(dims, rank);
  Rng rng(derive_seed(seed, 1));
  for (std::size_t d = 0; d < factors.order(); ++d)
    for (Eigen::Index i = 0; i < factors[d].rows(); ++i)
      for (Eigen::Index r = 0; r < factors[d].cols(); ++r) factors[d](i, r) = rng.normal();
  DenseTensor tensor = generate_from_factors(factors, noise_std, derive_seed(seed, 2));
  return {std::move(tensor), std::move(factors)};
}

}  // namespace vaecp
