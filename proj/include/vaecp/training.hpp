#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vaecp/cp.hpp"
#include "vaecp/model.hpp"
#include "vaecp/tensor.hpp"

namespace vaecp {

struct TrainConfig {
  std::size_t rank = 10;        // R, latent row length
  std::size_t hidden = 50;      // K, decoder hidden width
  double alpha = 1e-4;          // Adam step size
  std::size_t batch_size = 30;
  std::size_t samples = 1;      // Monte Carlo samples per entry
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  /// Stop when the 100-step moving average of the loss changes by less than
  /// this fraction between consecutive epoch ends. 0 disables the check.
  double convergence = 0.0;

  void validate(std::size_t train_size) const;
};

struct TrainResult {
  VaecpModel model;
  /// Minibatch loss (negative ELBO) after every optimizer step.
  std::vector<double> loss_trace;
  std::size_t epochs = 0;
};

/// Called after every epoch with the 1-based epoch number.
using EpochCallback = std::function<void(std::size_t, const VaecpModel&)>;

/// Minibatch Adam on the negative ELBO.
///
/// Each epoch shuffles the observed entries and walks them in batches of
/// `batch_size` (the last batch may be smaller). Every randomized choice is
/// derived from config.seed, so two runs with the same inputs agree bit for bit.
TrainResult train_vaecp(const ObservedEntrySet& train, const TrainConfig& config,
                        const EpochCallback& on_epoch = {});

/// Trailing moving average with the given window; entry t averages
/// trace[max(0, t-window+1) .. t].
std::vector<double> moving_average(std::span<const double> trace, std::size_t window);

double rmse(std::span<const double> predicted, std::span<const double> actual);

using EntryPredictor = std::function<double(std::span<const std::size_t>)>;

/// RMSE in normalized units: test values are standardized with `stats`
/// and compared to predictions made for exactly the test indices.
double evaluate(const EntryPredictor& predict, const ObservedEntrySet& test, const NormalizationStats& stats);

double evaluate(const VaecpModel& model, const ObservedEntrySet& test, const NormalizationStats& stats);
double evaluate(const FactorMatrices& factors, const ObservedEntrySet& test, const NormalizationStats& stats);

}  // namespace vaecp
