#pragma once

#include <cstdint>
#include <string>

#include "vaecp/model.hpp"
#include "vaecp/tensor.hpp"

namespace vaecp {

struct GradcheckOptions {
  Dims dims = {4, 4, 4};
  std::size_t rank = 3;
  std::size_t hidden = 5;
  std::size_t batch_size = 8;
  std::size_t samples = 1;
  std::uint64_t seed = 0;
  /// Relative step: coordinate p is perturbed by h * max(1, |p|).
  double h = 1e-5;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t parameter_count = 0;
  double analytic = 0.0;  // values at the worst coordinate
  double numeric = 0.0;
};

/// Error between two derivative estimates: |a - n| / max(|a|, |n|), falling
/// back to |a - n| when both magnitudes are below 1e-8.
double derivative_error(double analytic, double numeric) noexcept;

/// Compares grad_elbo_minibatch against central differences of
/// elbo_minibatch (same seed, so the noise is frozen) at every coordinate.
GradcheckReport gradcheck(const VaecpModel& model, const ObservedEntrySet& data,
                          const MinibatchOptions& options, double h);

/// Builds a random model and batch from options.seed, then checks it.
GradcheckReport gradcheck(const GradcheckOptions& options);

/// The random instance used by gradcheck(options): model, batch, batch options.
struct GradcheckInstance {
  VaecpModel model;
  ObservedEntrySet batch;
  MinibatchOptions minibatch;
};
GradcheckInstance make_gradcheck_instance(const GradcheckOptions& options);

}  // namespace vaecp
