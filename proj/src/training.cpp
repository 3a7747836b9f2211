#include "vaecp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vaecp/adam.hpp"
#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

namespace {

constexpr std::size_t kLossWindow = 100;

// Stream tags for derive_seed so that init, shuffling and noise never share draws.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

double trailing_mean(std::span<const double> trace, std::size_t window) {
  const std::size_t n = std::min(window, trace.size());
  double sum = 0.0;
  for (std::size_t i = trace.size() - n; i < trace.size(); ++i) sum += trace[i];
  return sum / static_cast<double>(n);
}

}  // namespace

void TrainConfig::validate(std::size_t train_size) const {
  require(rank >= 1, "rank must be at least 1");
  require(hidden >= 1, "hidden width must be at least 1");
  require(alpha > 0.0, "step size must be positive");
  require(batch_size >= 1, "batch size must be at least 1");
  require(batch_size <= train_size, "batch size " + std::to_string(batch_size) +
                                        " exceeds training set size " + std::to_string(train_size));
  require(samples >= 1, "need at least one Monte Carlo sample");
  require(max_epochs >= 1, "need at least one epoch");
  require(convergence >= 0.0, "convergence threshold must be non-negative");
}

TrainResult train_vaecp(const ObservedEntrySet& train, const TrainConfig& config,
                        const EpochCallback& on_epoch) {
  require(!train.empty(), "training set is empty");
  config.validate(train.size());

  TrainResult result;
  result.model = init_model(train.dims(), config.rank, config.hidden, derive_seed(config.seed, kInitStream));
  VaecpModel& model = result.model;

  std::vector<double> params = flatten(model);
  std::vector<double> grads(params.size());
  AdamState adam = adam_init(params.size(), config.alpha);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  MinibatchOptions batch_options;
  batch_options.total_observed = train.size();
  batch_options.samples = config.samples;

  std::uint64_t step = 0;
  double previous_average = 0.0;
  bool have_previous = false;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffler(derive_seed(config.seed, kShuffleStream, epoch));
    shuffler.shuffle(std::span(order));

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      batch_options.seed = derive_seed(config.seed, kNoiseStream, step);

      ElboGradient g;
      try {
        g = grad_elbo_minibatch(model, train, batch, batch_options);
        flatten_into(g.grad, grads);
        // loss = -ELBO, so descend along the negated bound gradient
        for (double& v : grads) v = -v;
        adam_step(adam, params, grads);
      } catch (const Error& e) {
        throw Error(e.category(), "step " + std::to_string(step + 1) + " (epoch " + std::to_string(epoch) +
                                      "): " + e.what());
      }
      unflatten(params, model);
      result.loss_trace.push_back(-g.report.total);
      ++step;
    }
    result.epochs = epoch;
    if (on_epoch) on_epoch(epoch, model);

    if (config.convergence > 0.0 && result.loss_trace.size() >= 2 * kLossWindow) {
      const double average = trailing_mean(result.loss_trace, kLossWindow);
      if (have_previous) {
        const double change = std::abs(average - previous_average) / std::max(std::abs(previous_average), 1e-12);
        if (change < config.convergence) break;
      }
      previous_average = average;
      have_previous = true;
    }
  }
  return result;
}

std::vector<double> moving_average(std::span<const double> trace, std::size_t window) {
  require(window >= 1, "moving average window must be positive");
  std::vector<double> out(trace.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    sum += trace[i];
    if (i >= window) sum -= trace[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  require(!predicted.empty(), "RMSE of an empty list");
  require(predicted.size() == actual.size(), "RMSE: length mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double r = predicted[i] - actual[i];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

double evaluate(const EntryPredictor& predict, const ObservedEntrySet& test, const NormalizationStats& stats) {
  require(!test.empty(), "cannot evaluate on an empty test set");
  std::vector<double> predicted(test.size()), actual(test.size());
  for (std::size_t e = 0; e < test.size(); ++e) {
    predicted[e] = predict(test.index(e));
    actual[e] = stats.apply(test.value(e));
  }
  return rmse(predicted, actual);
}

double evaluate(const VaecpModel& model, const ObservedEntrySet& test, const NormalizationStats& stats) {
  return evaluate([&](std::span<const std::size_t> index) { return predict_entry(model, index); }, test, stats);
}

double evaluate(const FactorMatrices& factors, const ObservedEntrySet& test, const NormalizationStats& stats) {
  return evaluate([&](std::span<const std::size_t> index) { return reconstruct_entry(factors, index); }, test,
                  stats);
}

}  // namespace vaecp
