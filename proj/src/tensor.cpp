#include "vaecp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

void check_dims(const Dims& dims) {
  require(dims.size() >= 2, "tensor needs at least 2 modes, got " + std::to_string(dims.size()));
  for (std::size_t d = 0; d < dims.size(); ++d)
    require(dims[d] >= 1, "mode " + std::to_string(d) + " has zero extent");
}

std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

bool index_in_range(const Dims& dims, std::span<const std::size_t> index) noexcept {
  if (index.size() != dims.size()) return false;
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (index[d] >= dims[d]) return false;
  return true;
}

DenseTensor::DenseTensor(Dims dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  values_.assign(element_count(dims_), 0.0);
}

DenseTensor::DenseTensor(Dims dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  check_dims(dims_);
  require(values_.size() == element_count(dims_),
          "value count " + std::to_string(values_.size()) + " does not match dims");
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
  require(index_in_range(dims_, index), "tensor index out of range");
  std::size_t linear = 0;
  for (std::size_t d = 0; d < dims_.size(); ++d) linear = linear * dims_[d] + index[d];
  return linear;
}

MultiIndex DenseTensor::unravel(std::size_t linear) const {
  require(linear < values_.size(), "linear index out of range");
  MultiIndex index(dims_.size());
  for (std::size_t d = dims_.size(); d-- > 0;) {
    index[d] = linear % dims_[d];
    linear /= dims_[d];
  }
  return index;
}

ObservedEntrySet::ObservedEntrySet(Dims dims) : dims_(std::move(dims)) { check_dims(dims_); }

ObservedEntrySet ObservedEntrySet::from_dense(const DenseTensor& tensor) {
  ObservedEntrySet set(tensor.dims());
  set.values_.reserve(tensor.size());
  set.indices_.reserve(tensor.size() * tensor.order());
  set.keys_.reserve(tensor.size());
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    MultiIndex index = tensor.unravel(i);
    set.add(index, tensor.values()[i]);
  }
  return set;
}

std::uint64_t ObservedEntrySet::key_of(std::span<const std::size_t> index) const noexcept {
  std::uint64_t key = 0;
  for (std::size_t d = 0; d < dims_.size(); ++d) key = key * dims_[d] + index[d];
  return key;
}

std::uint64_t ObservedEntrySet::key(std::size_t entry) const noexcept {
  return key_of(index(entry));
}

bool ObservedEntrySet::contains(std::span<const std::size_t> index) const {
  return index_in_range(dims_, index) && keys_.contains(key_of(index));
}

void ObservedEntrySet::add(std::span<const std::size_t> index, double value) {
  require(index_in_range(dims_, index), "observed entry index out of range");
  require(keys_.insert(key_of(index)).second, "duplicate observed entry index");
  indices_.insert(indices_.end(), index.begin(), index.end());
  values_.push_back(value);
}

ObservedEntrySet ObservedEntrySet::subset(std::span<const std::size_t> positions) const {
  ObservedEntrySet out(dims_);
  out.values_.reserve(positions.size());
  out.indices_.reserve(positions.size() * order());
  out.keys_.reserve(positions.size());
  for (std::size_t p : positions) {
    require(p < size(), "subset position out of range");
    out.add(index(p), values_[p]);
  }
  return out;
}

ObservedEntrySet ObservedEntrySet::with_values(std::vector<double> values) const {
  require(values.size() == values_.size(), "replacement value count mismatch");
  ObservedEntrySet out = *this;
  out.values_ = std::move(values);
  return out;
}

NormalizationStats compute_stats(const ObservedEntrySet& entries) {
  require(entries.size() >= 2, "normalization needs at least 2 entries");
  const auto values = entries.values();
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / n);
  require(std > 0.0, "cannot normalize constant values (zero variance)");
  return {mean, std};
}

std::pair<ObservedEntrySet, NormalizationStats> normalize(const ObservedEntrySet& entries) {
  NormalizationStats stats = compute_stats(entries);
  return {apply_stats(entries, stats), stats};
}

ObservedEntrySet apply_stats(const ObservedEntrySet& entries, const NormalizationStats& stats) {
  require(stats.std > 0.0, "normalization std must be positive");
  std::vector<double> out(entries.values().begin(), entries.values().end());
  for (double& v : out) v = stats.apply(v);
  return entries.with_values(std::move(out));
}

ObservedEntrySet invert_stats(const ObservedEntrySet& entries, const NormalizationStats& stats) {
  std::vector<double> out(entries.values().begin(), entries.values().end());
  for (double& v : out) v = stats.invert(v);
  return entries.with_values(std::move(out));
}

TrainTestSplit split_observed(const ObservedEntrySet& entries, double train_fraction,
                              std::uint64_t seed) {
  require(!entries.empty(), "cannot split an empty entry set");
  require(train_fraction > 0.0 && train_fraction <= 1.0, "train fraction must lie in (0, 1]");
  const std::size_t n = entries.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<std::size_t> train_pos(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_pos(order.begin() + n_train, order.end());
  std::sort(train_pos.begin(), train_pos.end());
  std::sort(test_pos.begin(), test_pos.end());
  return {entries.subset(train_pos), entries.subset(test_pos)};
}

std::vector<std::vector<std::size_t>> kfold_positions(std::size_t n, std::size_t folds,
                                                      std::uint64_t seed) {
  require(folds >= 2, "need at least 2 folds");
  require(n >= folds, "fewer entries than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

}  // namespace vaecp
