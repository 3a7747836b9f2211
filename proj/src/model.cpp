#include "vaecp/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"

namespace vaecp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

bool same(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

std::string describe_entry(const ObservedEntrySet& data, std::size_t e) {
  std::string s = "(";
  auto index = data.index(e);
  for (std::size_t d = 0; d < index.size(); ++d) s += (d ? "," : "") + std::to_string(index[d] + 1);
  return s + ")";
}

void check_batch(const VaecpModel& model, const ObservedEntrySet& data,
                 std::span<const std::size_t> positions, const MinibatchOptions& options) {
  require(!positions.empty(), "minibatch is empty");
  require(options.samples >= 1, "need at least one Monte Carlo sample");
  require(options.total_observed >= positions.size(),
          "total_observed must be at least the batch size");
  require(model.dims() == data.dims(), "model dims do not match data dims");
  for (std::size_t p : positions) require(p < data.size(), "batch position out of range");
}

// Draws the per-mode noise for one (entry, sample) and builds u.
void draw_input(const VariationalState& state, std::span<const std::size_t> index, std::uint64_t seed,
                VectorXd& eps, VectorXd& u) {
  const auto rank = static_cast<Index>(state.rank());
  Rng rng(seed);
  rng.fill_normal(std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
  for (std::size_t d = 0; d < state.order(); ++d) {
    const auto row = static_cast<Index>(index[d]);
    const auto off = static_cast<Index>(d) * rank;
    u.segment(off, rank) =
        state.mean[d].row(row).transpose().array() +
        (-0.5 * state.log_precision[d].row(row).transpose().array()).exp() * eps.segment(off, rank).array();
  }
}

}  // namespace

DecoderParams DecoderParams::zeros(std::size_t input_size, std::size_t hidden) {
  require(input_size >= 1 && hidden >= 1, "decoder sizes must be positive");
  const auto k = static_cast<Index>(hidden);
  DecoderParams p;
  p.W = MatrixXd::Zero(k, static_cast<Index>(input_size));
  p.b = VectorXd::Zero(k);
  p.w_mu = VectorXd::Zero(k);
  p.w_sigma = VectorXd::Zero(k);
  return p;
}

bool operator==(const DecoderParams& a, const DecoderParams& b) {
  return same(a.W, b.W) && same(a.b, b.b) && same(a.w_mu, b.w_mu) && a.b_mu == b.b_mu &&
         same(a.w_sigma, b.w_sigma) && a.b_sigma == b.b_sigma;
}

VariationalState VariationalState::zeros(const Dims& dims, std::size_t rank) {
  check_dims(dims);
  require(rank >= 1, "rank must be at least 1");
  VariationalState s;
  const auto r = static_cast<Index>(rank);
  for (std::size_t n : dims) {
    s.mean.push_back(MatrixXd::Zero(static_cast<Index>(n), r));
    s.log_precision.push_back(MatrixXd::Zero(static_cast<Index>(n), r));
  }
  s.prior_mean = VectorXd::Zero(r);
  s.prior_log_precision = VectorXd::Zero(r);
  return s;
}

Dims VariationalState::dims() const {
  Dims dims;
  for (const auto& m : mean) dims.push_back(static_cast<std::size_t>(m.rows()));
  return dims;
}

RowPosterior VariationalState::row(std::size_t mode, std::size_t index) const {
  require(mode < order() && index < static_cast<std::size_t>(mean[mode].rows()), "row out of range");
  const auto i = static_cast<Index>(index);
  return {mean[mode].row(i).transpose(), log_precision[mode].row(i).transpose()};
}

bool operator==(const VariationalState& a, const VariationalState& b) {
  if (a.order() != b.order()) return false;
  for (std::size_t d = 0; d < a.order(); ++d)
    if (!same(a.mean[d], b.mean[d]) || !same(a.log_precision[d], b.log_precision[d])) return false;
  return same(a.prior_mean, b.prior_mean) && same(a.prior_log_precision, b.prior_log_precision);
}

VaecpModel VaecpModel::zeros(const Dims& dims, std::size_t rank, std::size_t hidden) {
  return {DecoderParams::zeros(dims.size() * rank, hidden), VariationalState::zeros(dims, rank)};
}

void VaecpModel::validate() const {
  const std::size_t order = posterior.order();
  const std::size_t r = rank();
  require(order >= 2, "model needs at least 2 modes");
  require(r >= 1, "model rank must be at least 1");
  require(posterior.log_precision.size() == order, "log-precision mode count mismatch");
  for (std::size_t d = 0; d < order; ++d) {
    require(static_cast<std::size_t>(posterior.mean[d].cols()) == r &&
                posterior.log_precision[d].rows() == posterior.mean[d].rows() &&
                posterior.log_precision[d].cols() == posterior.mean[d].cols(),
            "posterior shape mismatch in mode " + std::to_string(d));
  }
  require(static_cast<std::size_t>(posterior.prior_log_precision.size()) == r, "prior size mismatch");
  const auto k = decoder.W.rows();
  require(k >= 1, "decoder needs at least one hidden unit");
  require(decoder.input_size() == order * r, "decoder input width must equal D*R");
  require(decoder.b.size() == k && decoder.w_mu.size() == k && decoder.w_sigma.size() == k,
          "decoder head sizes must equal K");
}

Eigen::VectorXd sample_row(const RowPosterior& post, const Eigen::Ref<const VectorXd>& epsilon) {
  require(epsilon.size() == post.mean.size() && post.log_precision.size() == post.mean.size(),
          "sample_row: length mismatch");
  return post.mean.array() + (-0.5 * post.log_precision.array()).exp() * epsilon.array();
}

DecodeResult decode(const DecoderParams& theta, const Eigen::Ref<const VectorXd>& u) {
  require(u.size() == theta.W.cols(), "decode: input length does not match W");
  require(theta.b.size() == theta.W.rows() && theta.w_mu.size() == theta.W.rows() &&
              theta.w_sigma.size() == theta.W.rows(),
          "decode: head sizes do not match hidden width");
  const VectorXd h = (theta.W * u + theta.b).array().tanh();
  return {theta.w_mu.dot(h) + theta.b_mu, theta.w_sigma.dot(h) + theta.b_sigma};
}

double kl_row(const Eigen::Ref<const VectorXd>& mean, const Eigen::Ref<const VectorXd>& log_precision,
              const Eigen::Ref<const VectorXd>& prior_mean,
              const Eigen::Ref<const VectorXd>& prior_log_precision) {
  require(mean.size() == log_precision.size() && mean.size() == prior_mean.size() &&
              mean.size() == prior_log_precision.size(),
          "kl_row: length mismatch");
  double kl = 0.0;
  for (Index r = 0; r < mean.size(); ++r) {
    const double diff = mean[r] - prior_mean[r];
    const double log_ratio = prior_log_precision[r] - log_precision[r];
    // exp(x) - 1 - x loses everything to cancellation near x = 0
    kl += std::expm1(log_ratio) - log_ratio + std::exp(prior_log_precision[r]) * diff * diff;
  }
  return 0.5 * kl;
}

double kl_total(const VariationalState& state) {
  double total = 0.0;
  for (std::size_t d = 0; d < state.order(); ++d)
    for (Index i = 0; i < state.mean[d].rows(); ++i)
      total += kl_row(state.mean[d].row(i).transpose(), state.log_precision[d].row(i).transpose(),
                      state.prior_mean, state.prior_log_precision);
  return total;
}

double gaussian_log_density(double x, double mu, double log_sigma2) noexcept {
  const double r = x - mu;
  return -0.5 * (std::log(2.0 * std::numbers::pi) + log_sigma2 + r * r * std::exp(-log_sigma2));
}

ElboReport elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& data,
                          std::span<const std::size_t> positions, const MinibatchOptions& options) {
  model.validate();
  check_batch(model, data, positions, options);

  const auto width = static_cast<Index>(model.decoder.input_size());
  VectorXd eps(width), u(width);
  const double inv_samples = 1.0 / static_cast<double>(options.samples);

  ElboReport report;
  report.entry_count = positions.size();
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const std::size_t e = positions[j];
    double entry_ll = 0.0;
    for (std::size_t l = 0; l < options.samples; ++l) {
      draw_input(model.posterior, data.index(e), derive_seed(options.seed, j, l), eps, u);
      const DecodeResult out = decode(model.decoder, u);
      entry_ll += gaussian_log_density(data.value(e), out.mu, out.log_sigma2);
    }
    if (!std::isfinite(entry_ll))
      fail(ErrorCategory::Numeric, "non-finite log-likelihood at entry " + describe_entry(data, e));
    report.recon_term += inv_samples * entry_ll;
  }
  const double scale = static_cast<double>(positions.size()) / static_cast<double>(options.total_observed);
  report.kl_term = scale * kl_total(model.posterior);
  report.total = report.recon_term - report.kl_term;
  return report;
}

ElboReport elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& batch,
                          const MinibatchOptions& options) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return elbo_minibatch(model, batch, all, options);
}

ElboGradient grad_elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& data,
                                 std::span<const std::size_t> positions,
                                 const MinibatchOptions& options) {
  model.validate();
  check_batch(model, data, positions, options);

  const DecoderParams& theta = model.decoder;
  const VariationalState& state = model.posterior;
  const std::size_t order = state.order();
  const auto rank = static_cast<Index>(state.rank());
  const auto width = static_cast<Index>(theta.input_size());

  ElboGradient out{{}, VaecpModel::zeros(model.dims(), state.rank(), theta.hidden())};
  DecoderParams& g_theta = out.grad.decoder;
  VariationalState& g_state = out.grad.posterior;
  ElboReport& report = out.report;
  report.entry_count = positions.size();

  VectorXd eps(width), u(width), h(theta.hidden()), delta(theta.hidden()), grad_u(width);
  const double inv_samples = 1.0 / static_cast<double>(options.samples);

  for (std::size_t j = 0; j < positions.size(); ++j) {
    const std::size_t e = positions[j];
    const auto index = data.index(e);
    const double x = data.value(e);
    double entry_ll = 0.0;
    for (std::size_t l = 0; l < options.samples; ++l) {
      draw_input(state, index, derive_seed(options.seed, j, l), eps, u);
      h = (theta.W * u + theta.b).array().tanh();
      const double mu = theta.w_mu.dot(h) + theta.b_mu;
      const double log_sigma2 = theta.w_sigma.dot(h) + theta.b_sigma;
      entry_ll += gaussian_log_density(x, mu, log_sigma2);

      // d log N / d mu and d log N / d log sigma^2
      const double resid = x - mu;
      const double inv_var = std::exp(-log_sigma2);
      const double g_mu = inv_samples * resid * inv_var;
      const double g_ls = inv_samples * 0.5 * (resid * resid * inv_var - 1.0);
      if (!std::isfinite(g_mu) || !std::isfinite(g_ls))
        fail(ErrorCategory::Numeric, "non-finite gradient at entry " + describe_entry(data, e));

      g_theta.w_mu += g_mu * h;
      g_theta.b_mu += g_mu;
      g_theta.w_sigma += g_ls * h;
      g_theta.b_sigma += g_ls;

      delta = (g_mu * theta.w_mu + g_ls * theta.w_sigma).array() * (1.0 - h.array().square());
      g_theta.W.noalias() += delta * u.transpose();
      g_theta.b += delta;
      grad_u.noalias() = theta.W.transpose() * delta;

      for (std::size_t d = 0; d < order; ++d) {
        const auto row = static_cast<Index>(index[d]);
        const auto off = static_cast<Index>(d) * rank;
        const auto gu = grad_u.segment(off, rank).array();
        g_state.mean[d].row(row) += gu.matrix().transpose();
        const auto stddev = (-0.5 * state.log_precision[d].row(row).transpose().array()).exp();
        g_state.log_precision[d].row(row) +=
            (-0.5 * gu * eps.segment(off, rank).array() * stddev).matrix().transpose();
      }
    }
    if (!std::isfinite(entry_ll))
      fail(ErrorCategory::Numeric, "non-finite log-likelihood at entry " + describe_entry(data, e));
    report.recon_term += inv_samples * entry_ll;
  }

  // KL over all rows, scaled to the batch's share of the observed entries.
  const double scale = static_cast<double>(positions.size()) / static_cast<double>(options.total_observed);
  const auto prior_precision = state.prior_log_precision.array().exp();
  double kl = 0.0;
  for (std::size_t d = 0; d < order; ++d) {
    for (Index i = 0; i < state.mean[d].rows(); ++i) {
      const auto m = state.mean[d].row(i).transpose().array();
      const auto lp = state.log_precision[d].row(i).transpose().array();
      kl += kl_row(state.mean[d].row(i).transpose(), state.log_precision[d].row(i).transpose(),
                   state.prior_mean, state.prior_log_precision);
      const Eigen::ArrayXd diff = m - state.prior_mean.array();
      const Eigen::ArrayXd ratio = (state.prior_log_precision.array() - lp).exp();
      g_state.mean[d].row(i) -= (scale * prior_precision * diff).matrix().transpose();
      g_state.log_precision[d].row(i) -= (scale * 0.5 * (1.0 - ratio)).matrix().transpose();
      g_state.prior_mean += (scale * prior_precision * diff).matrix();
      g_state.prior_log_precision -= (scale * 0.5 * (ratio + prior_precision * diff.square() - 1.0)).matrix();
    }
  }
  report.kl_term = scale * kl;
  report.total = report.recon_term - report.kl_term;
  return out;
}

ElboGradient grad_elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& batch,
                                 const MinibatchOptions& options) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return grad_elbo_minibatch(model, batch, all, options);
}

double predict_entry(const VaecpModel& model, std::span<const std::size_t> index) {
  const VariationalState& state = model.posterior;
  require(index_in_range(state.dims(), index), "predict_entry: index out of range");
  const auto rank = static_cast<Index>(state.rank());
  VectorXd u(static_cast<Index>(state.order()) * rank);
  for (std::size_t d = 0; d < state.order(); ++d)
    u.segment(static_cast<Index>(d) * rank, rank) = state.mean[d].row(static_cast<Index>(index[d])).transpose();
  return decode(model.decoder, u).mu;
}

VaecpModel init_model(const Dims& dims, std::size_t rank, std::size_t hidden, std::uint64_t seed) {
  require(rank >= 1 && hidden >= 1, "rank and hidden width must be positive");
  VaecpModel model = VaecpModel::zeros(dims, rank, hidden);
  Rng rng(seed);
  const double in_std = 0.5 / std::sqrt(static_cast<double>(dims.size() * rank));
  const double head_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  DecoderParams& theta = model.decoder;
  for (Index k = 0; k < theta.W.rows(); ++k)
    for (Index c = 0; c < theta.W.cols(); ++c) theta.W(k, c) = rng.normal(0.0, in_std);
  for (Index k = 0; k < theta.w_mu.size(); ++k) theta.w_mu[k] = rng.normal(0.0, head_std);
  for (Index k = 0; k < theta.w_sigma.size(); ++k) theta.w_sigma[k] = rng.normal(0.0, head_std);
  for (auto& m : model.posterior.mean)
    for (Index i = 0; i < m.rows(); ++i)
      for (Index r = 0; r < m.cols(); ++r) m(i, r) = rng.normal();
  for (auto& lp : model.posterior.log_precision) lp.setConstant(kInitLogPrecision);
  return model;
}

std::size_t parameter_count(const VaecpModel& model) noexcept {
  const auto& t = model.decoder;
  std::size_t n = static_cast<std::size_t>(t.W.size() + t.b.size() + t.w_mu.size() + t.w_sigma.size()) + 2;
  for (std::size_t d = 0; d < model.posterior.order(); ++d)
    n += static_cast<std::size_t>(model.posterior.mean[d].size() + model.posterior.log_precision[d].size());
  return n + static_cast<std::size_t>(model.posterior.prior_mean.size() +
                                      model.posterior.prior_log_precision.size());
}

namespace {

// Visits every parameter slot in flat-layout order.
template <typename Model, typename Visit>
void for_each_parameter(Model& model, Visit&& visit) {
  auto& t = model.decoder;
  for (Index k = 0; k < t.W.rows(); ++k)
    for (Index c = 0; c < t.W.cols(); ++c) visit(t.W(k, c));
  for (Index k = 0; k < t.b.size(); ++k) visit(t.b[k]);
  for (Index k = 0; k < t.w_mu.size(); ++k) visit(t.w_mu[k]);
  visit(t.b_mu);
  for (Index k = 0; k < t.w_sigma.size(); ++k) visit(t.w_sigma[k]);
  visit(t.b_sigma);
  auto& s = model.posterior;
  for (std::size_t d = 0; d < s.order(); ++d) {
    for (Index i = 0; i < s.mean[d].rows(); ++i)
      for (Index r = 0; r < s.mean[d].cols(); ++r) visit(s.mean[d](i, r));
    for (Index i = 0; i < s.log_precision[d].rows(); ++i)
      for (Index r = 0; r < s.log_precision[d].cols(); ++r) visit(s.log_precision[d](i, r));
  }
  for (Index r = 0; r < s.prior_mean.size(); ++r) visit(s.prior_mean[r]);
  for (Index r = 0; r < s.prior_log_precision.size(); ++r) visit(s.prior_log_precision[r]);
}

}  // namespace

void flatten_into(const VaecpModel& model, std::span<double> out) {
  require(out.size() == parameter_count(model), "flatten: output length mismatch");
  std::size_t i = 0;
  for_each_parameter(model, [&](const double& v) { out[i++] = v; });
}

std::vector<double> flatten(const VaecpModel& model) {
  std::vector<double> out(parameter_count(model));
  flatten_into(model, out);
  return out;
}

void unflatten(std::span<const double> flat, VaecpModel& model) {
  require(flat.size() == parameter_count(model), "unflatten: input length mismatch");
  std::size_t i = 0;
  for_each_parameter(model, [&](double& v) { v = flat[i++]; });
}

}  // namespace vaecp
