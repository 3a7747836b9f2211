#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vaecp/tensor.hpp"

namespace vaecp {

/// Diagonal Gaussian q(U^d(i,:)) = N(mean, diag(exp(-log_precision))).
struct RowPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_precision;
};

/// Decoder network: h = tanh(W u + b), mu = w_mu.h + b_mu,
/// log sigma^2 = w_sigma.h + b_sigma.
///
/// W is K x (D*R). Columns [d*R, (d+1)*R) of row k are the weights hidden
/// unit k applies to the mode-d factor row.
struct DecoderParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Eigen::VectorXd w_mu;
  double b_mu = 0.0;
  Eigen::VectorXd w_sigma;
  double b_sigma = 0.0;

  static DecoderParams zeros(std::size_t input_size, std::size_t hidden);

  std::size_t hidden() const noexcept { return static_cast<std::size_t>(W.rows()); }
  std::size_t input_size() const noexcept { return static_cast<std::size_t>(W.cols()); }

  friend bool operator==(const DecoderParams& a, const DecoderParams& b);
};

/// Per-row posteriors for every mode plus the single prior shared by all rows.
struct VariationalState {
  std::vector<Eigen::MatrixXd> mean;           // mode d: N_d x R
  std::vector<Eigen::MatrixXd> log_precision;  // mode d: N_d x R
  Eigen::VectorXd prior_mean;
  Eigen::VectorXd prior_log_precision;

  static VariationalState zeros(const Dims& dims, std::size_t rank);

  std::size_t order() const noexcept { return mean.size(); }
  std::size_t rank() const noexcept { return static_cast<std::size_t>(prior_mean.size()); }
  Dims dims() const;
  RowPosterior row(std::size_t mode, std::size_t index) const;

  friend bool operator==(const VariationalState& a, const VariationalState& b);
};

/// All trainable parameters. Gradients use the same type.
struct VaecpModel {
  DecoderParams decoder;
  VariationalState posterior;

  static VaecpModel zeros(const Dims& dims, std::size_t rank, std::size_t hidden);

  std::size_t rank() const noexcept { return posterior.rank(); }
  std::size_t hidden() const noexcept { return decoder.hidden(); }
  Dims dims() const { return posterior.dims(); }

  /// Throws unless decoder and posterior shapes agree.
  void validate() const;

  friend bool operator==(const VaecpModel&, const VaecpModel&) = default;
};

struct DecodeResult {
  double mu = 0.0;
  double log_sigma2 = 0.0;
};

/// Reparameterized draw mean + exp(-log_precision / 2) * epsilon.
Eigen::VectorXd sample_row(const RowPosterior& post, const Eigen::Ref<const Eigen::VectorXd>& epsilon);

DecodeResult decode(const DecoderParams& theta, const Eigen::Ref<const Eigen::VectorXd>& u);

/// KL(q || p) for diagonal Gaussians given by means and log-precisions:
/// 0.5 * sum_r [ lp_r / lq_r + lp_r (mq_r - mp_r)^2 - 1 + log lq_r - log lp_r ].
double kl_row(const Eigen::Ref<const Eigen::VectorXd>& mean,
              const Eigen::Ref<const Eigen::VectorXd>& log_precision,
              const Eigen::Ref<const Eigen::VectorXd>& prior_mean,
              const Eigen::Ref<const Eigen::VectorXd>& prior_log_precision);

inline double kl_row(const RowPosterior& post, const Eigen::Ref<const Eigen::VectorXd>& prior_mean,
                     const Eigen::Ref<const Eigen::VectorXd>& prior_log_precision) {
  return kl_row(post.mean, post.log_precision, prior_mean, prior_log_precision);
}

/// Sum of kl_row over every row of every mode.
double kl_total(const VariationalState& state);

/// log N(x | mu, exp(log_sigma2))
double gaussian_log_density(double x, double mu, double log_sigma2) noexcept;

struct ElboReport {
  double total = 0.0;
  double recon_term = 0.0;
  double kl_term = 0.0;  // already scaled; total = recon_term - kl_term
  std::size_t entry_count = 0;
};

struct MinibatchOptions {
  /// |Omega_obs|; the KL over all rows is scaled by batch size / total_observed.
  std::size_t total_observed = 0;
  /// Monte Carlo samples per entry.
  std::size_t samples = 1;
  std::uint64_t seed = 0;
};

/// Reparameterized lower bound over the entries at `positions` of `data`.
///
/// The noise for batch slot j and sample l comes from Rng(derive_seed(seed, j, l)),
/// drawing R normals per mode in mode order. Gradients computed with the
/// same seed therefore differentiate exactly this function.
ElboReport elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& data,
                          std::span<const std::size_t> positions, const MinibatchOptions& options);

/// Convenience overload: the whole set is the batch.
ElboReport elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& batch,
                          const MinibatchOptions& options);

struct ElboGradient {
  ElboReport report;
  VaecpModel grad;  // d(total)/d(parameter); precisions w.r.t. their logs
};

ElboGradient grad_elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& data,
                                 std::span<const std::size_t> positions,
                                 const MinibatchOptions& options);

ElboGradient grad_elbo_minibatch(const VaecpModel& model, const ObservedEntrySet& batch,
                                 const MinibatchOptions& options);

/// Decoder mean at the concatenated posterior means of the indexed rows.
double predict_entry(const VaecpModel& model, std::span<const std::size_t> index);

/// Initial posterior log-precision of every factor entry.
inline constexpr double kInitLogPrecision = 4.0;

/// Input weights N(0, (0.5/sqrt(D*R))^2), output weights N(0, 1/K), biases 0,
/// posterior means N(0, 1) with log-precision kInitLogPrecision, standard-normal prior.
/// A tiny decoder with unit posterior variance sits at a saddle where the
/// prediction is the data mean, so the network starts in its active range.
VaecpModel init_model(const Dims& dims, std::size_t rank, std::size_t hidden, std::uint64_t seed);

/// Flat parameter layout, in order:
///   W (row-major, K x D*R), b (K), w_mu (K), b_mu, w_sigma (K), b_sigma,
///   for each mode d: mean_d (row-major N_d x R), then log_precision_d (N_d x R),
///   prior_mean (R), prior_log_precision (R).
std::size_t parameter_count(const VaecpModel& model) noexcept;
std::vector<double> flatten(const VaecpModel& model);
void flatten_into(const VaecpModel& model, std::span<double> out);
void unflatten(std::span<const double> flat, VaecpModel& model);

}  // namespace vaecp
