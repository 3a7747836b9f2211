#include "vaecp/adam.hpp"

#include <cmath>
#include <string>

#include "vaecp/error.hpp"

namespace vaecp {

AdamState adam_init(std::size_t param_count, double alpha) {
  require(param_count >= 1, "Adam needs at least one parameter");
  require(alpha > 0.0 && std::isfinite(alpha), "Adam step size must be positive");
  AdamState state;
  state.m.assign(param_count, 0.0);
  state.v.assign(param_count, 0.0);
  state.alpha = alpha;
  return state;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  require(params.size() == state.m.size() && grads.size() == state.m.size(),
          "Adam: parameter/gradient length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      fail(ErrorCategory::Numeric, "Adam: non-finite gradient at coordinate " + std::to_string(i));

  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= state.alpha * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace vaecp
