#include "vaecp/cp.hpp"

#include <cmath>
#include <string>

#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

FactorMatrices::FactorMatrices(std::vector<Eigen::MatrixXd> factors) : factors_(std::move(factors)) {
  require(factors_.size() >= 2, "CP model needs at least 2 factor matrices");
  const auto rank = factors_.front().cols();
  require(rank >= 1, "CP rank must be at least 1");
  for (std::size_t d = 0; d < factors_.size(); ++d) {
    require(factors_[d].cols() == rank,
            "factor " + std::to_string(d) + " has " + std::to_string(factors_[d].cols()) +
                " columns, expected " + std::to_string(rank));
    require(factors_[d].rows() >= 1, "factor " + std::to_string(d) + " has no rows");
  }
}

FactorMatrices FactorMatrices::zeros(const Dims& dims, std::size_t rank) {
  check_dims(dims);
  require(rank >= 1, "CP rank must be at least 1");
  std::vector<Eigen::MatrixXd> factors;
  for (std::size_t n : dims)
    factors.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rank)));
  return FactorMatrices(std::move(factors));
}

Dims FactorMatrices::dims() const {
  Dims dims;
  for (const auto& f : factors_) dims.push_back(static_cast<std::size_t>(f.rows()));
  return dims;
}

double reconstruct_entry(const FactorMatrices& factors, std::span<const std::size_t> index) {
  require(index_in_range(factors.dims(), index), "index out of range for CP factors");
  const auto rank = static_cast<Eigen::Index>(factors.rank());
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rank; ++r) {
    double prod = 1.0;
    for (std::size_t d = 0; d < factors.order(); ++d)
      prod *= factors[d](static_cast<Eigen::Index>(index[d]), r);
    sum += prod;
  }
  return sum;
}

DenseTensor reconstruct_full(const FactorMatrices& factors) {
  DenseTensor out(factors.dims());
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = reconstruct_entry(factors, out.unravel(i));
  return out;
}

double cp_rmse(const FactorMatrices& factors, const ObservedEntrySet& entries) {
  require(!entries.empty(), "RMSE over an empty entry set");
  double ss = 0.0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const double r = entries.value(e) - reconstruct_entry(factors, entries.index(e));
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(entries.size()));
}

AlsResult als_fit(const ObservedEntrySet& train, const AlsOptions& options,
                  const SweepCallback& on_sweep) {
  require(!train.empty(), "ALS needs a nonempty training set");
  require(options.rank >= 1, "CP rank must be at least 1");
  require(options.max_iters >= 1, "ALS needs at least one sweep");

  const Dims& dims = train.dims();
  const std::size_t order = dims.size();
  const auto rank = static_cast<Eigen::Index>(options.rank);

  FactorMatrices factors = FactorMatrices::zeros(dims, options.rank);
  Rng rng(options.seed);
  for (std::size_t d = 0; d < order; ++d)
    for (Eigen::Index i = 0; i < factors[d].rows(); ++i)
      for (Eigen::Index r = 0; r < rank; ++r) factors[d](i, r) = rng.normal();

  // entries_by_row[d][i]: positions of training entries with index[d] == i
  std::vector<std::vector<std::vector<std::size_t>>> entries_by_row(order);
  for (std::size_t d = 0; d < order; ++d) entries_by_row[d].resize(dims[d]);
  for (std::size_t e = 0; e < train.size(); ++e) {
    auto index = train.index(e);
    for (std::size_t d = 0; d < order; ++d) entries_by_row[d][index[d]].push_back(e);
  }

  AlsResult result;
  Eigen::MatrixXd gram(rank, rank);
  Eigen::VectorXd rhs(rank);
  Eigen::VectorXd z(rank);
  double previous = cp_rmse(factors, train);

  for (std::size_t sweep = 1; sweep <= options.max_iters; ++sweep) {
    for (std::size_t d = 0; d < order; ++d) {
      for (std::size_t row = 0; row < dims[d]; ++row) {
        const auto& members = entries_by_row[d][row];
        if (members.empty()) continue;
        gram.setZero();
        rhs.setZero();
        for (std::size_t e : members) {
          auto index = train.index(e);
          z.setOnes();
          for (std::size_t m = 0; m < order; ++m)
            if (m != d) z.array() *= factors[m].row(static_cast<Eigen::Index>(index[m])).transpose().array();
          gram.selfadjointView<Eigen::Lower>().rankUpdate(z);
          rhs += train.value(e) * z;
        }
        gram.diagonal().array() += options.ridge;
        factors[d].row(static_cast<Eigen::Index>(row)) =
            gram.selfadjointView<Eigen::Lower>().ldlt().solve(rhs).transpose();
      }
    }

    const double current = cp_rmse(factors, train);
    if (!std::isfinite(current))
      fail(ErrorCategory::Numeric, "ALS training RMSE became non-finite at sweep " + std::to_string(sweep));
    result.rmse_trace.push_back(current);
    if (on_sweep) on_sweep(sweep, factors);

    const double decrease = previous > 0.0 ? (previous - current) / previous : 0.0;
    previous = current;
    if (decrease < options.tol) break;
  }
  result.factors = std::move(factors);
  return result;
}

}  // namespace vaecp
