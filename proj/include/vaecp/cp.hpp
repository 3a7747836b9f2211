#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vaecp/tensor.hpp"

namespace vaecp {

/// CP factors: one N_d x R matrix per mode, all with the same column count.
class FactorMatrices {
 public:
  FactorMatrices() = default;
  explicit FactorMatrices(std::vector<Eigen::MatrixXd> factors);

  /// Zero-filled factors for the given shape.
  static FactorMatrices zeros(const Dims& dims, std::size_t rank);

  std::size_t order() const noexcept { return factors_.size(); }
  std::size_t rank() const noexcept { return factors_.empty() ? 0 : factors_.front().cols(); }
  Dims dims() const;

  const Eigen::MatrixXd& operator[](std::size_t mode) const { return factors_[mode]; }
  Eigen::MatrixXd& operator[](std::size_t mode) { return factors_[mode]; }

 private:
  std::vector<Eigen::MatrixXd> factors_;
};

/// sum_r prod_d U^d(i_d, r)
double reconstruct_entry(const FactorMatrices& factors, std::span<const std::size_t> index);

DenseTensor reconstruct_full(const FactorMatrices& factors);

struct AlsOptions {
  std::size_t rank = 1;
  std::size_t max_iters = 200;
  /// Stop once the relative decrease of training RMSE between sweeps is below this.
  double tol = 1e-10;
  double ridge = 1e-8;
  std::uint64_t seed = 0;
};

struct AlsResult {
  FactorMatrices factors;
  /// Training RMSE after each completed sweep.
  std::vector<double> rmse_trace;
};

/// Called after every sweep with the 1-based sweep number.
using SweepCallback = std::function<void(std::size_t, const FactorMatrices&)>;

/// Masked alternating least squares over the observed entries only.
///
/// Factors start i.i.d. N(0, 1). Each sweep visits modes in order and
/// replaces every row U^d(i, :) by the ridge-regularized least-squares
/// solution over the entries whose d-th index is i, all other modes held
/// fixed. Rows with no observed entries keep their initial values.
AlsResult als_fit(const ObservedEntrySet& train, const AlsOptions& options,
                  const SweepCallback& on_sweep = {});

/// RMSE of reconstruct_entry against the entry values.
double cp_rmse(const FactorMatrices& factors, const ObservedEntrySet& entries);

}  // namespace vaecp
