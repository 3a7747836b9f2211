#include "vaecp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

double derivative_error(double analytic, double numeric) noexcept {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < 1e-8 ? diff : diff / scale;
}

GradcheckReport gradcheck(const VaecpModel& model, const ObservedEntrySet& data,
                          const MinibatchOptions& options, double h) {
  require(h > 0.0, "finite-difference step must be positive");
  const std::vector<double> analytic = flatten(grad_elbo_minibatch(model, data, options).grad);

  GradcheckReport report;
  report.parameter_count = analytic.size();
  std::vector<double> params = flatten(model);
  VaecpModel probe = model;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double original = params[i];
    const double step = h * std::max(1.0, std::abs(original));
    params[i] = original + step;
    unflatten(params, probe);
    const double up = elbo_minibatch(probe, data, options).total;
    params[i] = original - step;
    unflatten(params, probe);
    const double down = elbo_minibatch(probe, data, options).total;
    params[i] = original;

    const double numeric = (up - down) / (2.0 * step);
    const double err = derivative_error(analytic[i], numeric);
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_coordinate = i;
      report.analytic = analytic[i];
      report.numeric = numeric;
    }
  }
  return report;
}

GradcheckInstance make_gradcheck_instance(const GradcheckOptions& options) {
  check_dims(options.dims);
  require(options.rank >= 1 && options.hidden >= 1, "rank and hidden width must be positive");
  const std::size_t cells = element_count(options.dims);
  require(options.batch_size >= 1 && options.batch_size <= cells, "batch size must be in [1, number of cells]");

  Rng rng(derive_seed(options.seed, 7));
  VaecpModel model = VaecpModel::zeros(options.dims, options.rank, options.hidden);
  // O(1) weights keep the hidden layer away from both the linear regime
  // and saturation, so every coordinate has a well-scaled derivative.
  std::vector<double> flat(parameter_count(model));
  for (double& v : flat) v = rng.normal(0.0, 0.5);
  unflatten(flat, model);

  std::vector<std::size_t> cell_order(cells);
  for (std::size_t i = 0; i < cells; ++i) cell_order[i] = i;
  rng.shuffle(std::span(cell_order));
  DenseTensor shape(options.dims);
  ObservedEntrySet batch(options.dims);
  for (std::size_t j = 0; j < options.batch_size; ++j) batch.add(shape.unravel(cell_order[j]), rng.normal());

  MinibatchOptions minibatch;
  minibatch.total_observed = std::max(options.batch_size, cells / 2);
  minibatch.samples = options.samples;
  minibatch.seed = derive_seed(options.seed, 8);
  return {std::move(model), std::move(batch), minibatch};
}

GradcheckReport gradcheck(const GradcheckOptions& options) {
  const GradcheckInstance instance = make_gradcheck_instance(options);
  return gradcheck(instance.model, instance.batch, instance.minibatch, options.h);
}

}  // namespace vaecp
