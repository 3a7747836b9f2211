#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vaecp {

using Dims = std::vector<std::size_t>;
/// 0-based position along each mode.
using MultiIndex = std::vector<std::size_t>;

/// Validates a shape: at least two modes, every extent positive.
void check_dims(const Dims& dims);
std::size_t element_count(const Dims& dims);
bool index_in_range(const Dims& dims, std::span<const std::size_t> index) noexcept;

/// Dense D-way array stored in row-major order (last mode varies fastest).
class DenseTensor {
 public:
  explicit DenseTensor(Dims dims);
  DenseTensor(Dims dims, std::vector<double> values);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  std::size_t linear_index(std::span<const std::size_t> index) const;
  MultiIndex unravel(std::size_t linear) const;

  double at(std::span<const std::size_t> index) const { return values_[linear_index(index)]; }
  double& at(std::span<const std::size_t> index) { return values_[linear_index(index)]; }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Dims dims_;
  std::vector<double> values_;
};

/// The observed entries of a partially known tensor: (multi-index, value)
/// pairs with unique indices. Indices are stored flat, `order()` per entry.
class ObservedEntrySet {
 public:
  explicit ObservedEntrySet(Dims dims);

  /// Every entry of a dense tensor, in row-major order.
  static ObservedEntrySet from_dense(const DenseTensor& tensor);

  /// Appends an entry. Throws on an out-of-range or duplicate index.
  void add(std::span<const std::size_t> index, double value);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const std::size_t> index(std::size_t entry) const noexcept {
    return {indices_.data() + entry * dims_.size(), dims_.size()};
  }
  double value(std::size_t entry) const noexcept { return values_[entry]; }
  std::span<const double> values() const noexcept { return values_; }

  /// Row-major linear key of an entry; unique within the set.
  std::uint64_t key(std::size_t entry) const noexcept;
  bool contains(std::span<const std::size_t> index) const;

  /// Entries at the given positions, in the given order.
  ObservedEntrySet subset(std::span<const std::size_t> positions) const;
  /// Same indices with replacement values.
  ObservedEntrySet with_values(std::vector<double> values) const;

  friend bool operator==(const ObservedEntrySet& a, const ObservedEntrySet& b) {
    return a.dims_ == b.dims_ && a.indices_ == b.indices_ && a.values_ == b.values_;
  }

 private:
  std::uint64_t key_of(std::span<const std::size_t> index) const noexcept;

  Dims dims_;
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
  std::unordered_set<std::uint64_t> keys_;
};

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;  // population standard deviation

  double apply(double v) const noexcept { return (v - mean) / std; }
  double invert(double z) const noexcept { return z * std + mean; }
};

/// Population mean and standard deviation of the observed values.
NormalizationStats compute_stats(const ObservedEntrySet& entries);

/// Standardizes values to zero mean and unit population variance.
/// Throws when there are fewer than two entries or all values are equal.
std::pair<ObservedEntrySet, NormalizationStats> normalize(const ObservedEntrySet& entries);

/// Applies previously computed statistics (e.g. training stats to a test set).
ObservedEntrySet apply_stats(const ObservedEntrySet& entries, const NormalizationStats& stats);
ObservedEntrySet invert_stats(const ObservedEntrySet& entries, const NormalizationStats& stats);

struct TrainTestSplit {
  ObservedEntrySet train;
  ObservedEntrySet test;
};

/// Uniform random partition with |train| = floor(train_fraction * |entries|).
/// Both halves keep the original entry order.
TrainTestSplit split_observed(const ObservedEntrySet& entries, double train_fraction,
                              std::uint64_t seed);

/// Partitions positions 0..n-1 into `folds` near-equal random groups.
/// Fold f gets the shuffled positions congruent to f modulo `folds`.
std::vector<std::vector<std::size_t>> kfold_positions(std::size_t n, std::size_t folds,
                                                      std::uint64_t seed);

}  // namespace vaecp
