#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "vaecp/error.hpp"
#include "vaecp/gradcheck.hpp"
#include "vaecp/model.hpp"
#include "vaecp/rng.hpp"

using namespace vaecp;
using Eigen::VectorXd;

namespace {

VaecpModel random_model(const Dims& dims, std::size_t rank, std::size_t hidden, std::uint64_t seed,
                        double scale = 0.5) {
  VaecpModel m = VaecpModel::zeros(dims, rank, hidden);
  std::vector<double> flat(parameter_count(m));
  Rng rng(seed);
  for (double& v : flat) v = rng.normal(0.0, scale);
  unflatten(flat, m);
  return m;
}

VectorXd random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, scale);
  return v;
}

// Scalar re-implementation of the decoder on plain arrays.
DecodeResult scalar_decode(const DecoderParams& t, const std::vector<double>& u) {
  const std::size_t k_count = static_cast<std::size_t>(t.W.rows());
  std::vector<double> h(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    double a = t.b[k];
    for (std::size_t c = 0; c < u.size(); ++c) a += t.W(k, c) * u[c];
    h[k] = std::tanh(a);
  }
  double mu = t.b_mu, ls = t.b_sigma;
  for (std::size_t k = 0; k < k_count; ++k) {
    mu += t.w_mu[k] * h[k];
    ls += t.w_sigma[k] * h[k];
  }
  return {mu, ls};
}

}  // namespace

TEST_CASE("sample_row") {
  RowPosterior post{VectorXd::Constant(3, 1.5), VectorXd::Constant(3, std::log(4.0))};
  SUBCASE("zero noise returns the mean") {
    CHECK(sample_row(post, VectorXd::Zero(3)) == post.mean);
  }
  SUBCASE("precision 4 scales noise by one half") {
    const VectorXd s = sample_row(post, VectorXd::Ones(3));
    for (int r = 0; r < 3; ++r) CHECK(s[r] == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(sample_row(post, VectorXd::Zero(2)), Error);
  }
  SUBCASE("Monte Carlo moments match mean and 1/precision") {
    RowPosterior p{VectorXd(2), VectorXd(2)};
    p.mean << -0.7, 2.0;
    p.log_precision << 0.3, -1.2;
    Rng rng(5);
    const int n = 100000;
    VectorXd sum = VectorXd::Zero(2), sq = VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) {
      const VectorXd s = sample_row(p, random_vector(rng, 2));
      sum += s;
      sq += s.cwiseProduct(s);
    }
    for (int r = 0; r < 2; ++r) {
      const double var = 1.0 / std::exp(p.log_precision[r]);
      const double mean = sum[r] / n;
      const double sample_var = sq[r] / n - mean * mean;
      CHECK(std::abs(mean - p.mean[r]) < 3.0 * std::sqrt(var / n));
      CHECK(std::abs(sample_var - var) < 3.0 * var * std::sqrt(2.0 / n));
    }
  }
  SUBCASE("sample minus mean is linear in the noise") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      RowPosterior p{random_vector(rng, 4), random_vector(rng, 4)};
      const VectorXd e1 = random_vector(rng, 4), e2 = random_vector(rng, 4);
      const double a = rng.normal(), b = rng.normal();
      const VectorXd lhs = sample_row(p, a * e1 + b * e2) - p.mean;
      const VectorXd rhs = a * (sample_row(p, e1) - p.mean) + b * (sample_row(p, e2) - p.mean);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("decode") {
  SUBCASE("all-zero network gives mu 0 and unit variance") {
    const DecoderParams t = DecoderParams::zeros(6, 4);
    const DecodeResult out = decode(t, VectorXd::Constant(6, 3.0));
    CHECK(out.mu == 0.0);
    CHECK(out.log_sigma2 == 0.0);
  }
  SUBCASE("constant network") {
    DecoderParams t = DecoderParams::zeros(1, 1);
    t.w_mu[0] = 2.0;
    t.b_mu = 0.5;
    for (double u : {-10.0, 0.0, 3.3}) CHECK(decode(t, VectorXd::Constant(1, u)).mu == 0.5);
  }
  SUBCASE("matches a scalar evaluation on D=2, R=2, K=3") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const VaecpModel m = random_model({3, 3}, 2, 3, seed, 0.8);
      Rng rng(seed + 100);
      std::vector<double> u(4);
      for (double& v : u) v = rng.normal();
      const DecodeResult a = decode(m.decoder, Eigen::Map<const VectorXd>(u.data(), 4));
      const DecodeResult b = scalar_decode(m.decoder, u);
      CHECK(std::abs(a.mu - b.mu) < 1e-12);
      CHECK(std::abs(a.log_sigma2 - b.log_sigma2) < 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(decode(DecoderParams::zeros(6, 4), VectorXd::Zero(5)), Error);
  }
  SUBCASE("invariant to permuting hidden units") {
    const VaecpModel m = random_model({3, 3}, 2, 5, 4);
    DecoderParams p = m.decoder;
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    for (int k = 0; k < 5; ++k) {
      p.W.row(k) = m.decoder.W.row(perm[k]);
      p.b[k] = m.decoder.b[perm[k]];
      p.w_mu[k] = m.decoder.w_mu[perm[k]];
      p.w_sigma[k] = m.decoder.w_sigma[perm[k]];
    }
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const VectorXd u = random_vector(rng, 4);
      CHECK(decode(p, u).mu == doctest::Approx(decode(m.decoder, u).mu).epsilon(1e-13));
      CHECK(decode(p, u).log_sigma2 == doctest::Approx(decode(m.decoder, u).log_sigma2).epsilon(1e-13));
    }
  }
}

TEST_CASE("kl_row") {
  const VectorXd zero = VectorXd::Zero(1);
  SUBCASE("identical distributions") {
    Rng rng(1);
    const VectorXd m = random_vector(rng, 5), lp = random_vector(rng, 5);
    CHECK(kl_row(m, lp, m, lp) == 0.0);
  }
  SUBCASE("unit mean shift") {
    CHECK(kl_row(VectorXd::Ones(1), zero, zero, zero) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("variance e against the standard normal, cross-checked by Monte Carlo") {
    const VectorXd lp = VectorXd::Constant(1, -1.0);
    const double closed = kl_row(zero, lp, zero, zero);
    CHECK(closed == doctest::Approx(0.5 * (std::numbers::e - 2.0)).epsilon(1e-14));
    CHECK(std::abs(closed - 0.35914) < 1e-5);

    // E_q[log q(z) - log p(z)], z ~ N(0, e)
    Rng rng(3);
    const int n = 400000;
    const double sd = std::exp(0.5);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = sd * rng.normal();
      const double log_q = -0.5 * (std::log(2 * std::numbers::pi) + 1.0 + z * z / std::numbers::e);
      const double log_p = -0.5 * (std::log(2 * std::numbers::pi) + z * z);
      sum += log_q - log_p;
      sq += (log_q - log_p) * (log_q - log_p);
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - closed) < 4.0 * se);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(kl_row(VectorXd::Zero(2), zero, zero, zero), Error);
  }
  SUBCASE("non-negative, zero exactly at the prior") {
    Rng rng(11);
    for (int trial = 0; trial < 10000; ++trial) {
      const std::size_t r = 1 + rng.uniform_index(6);
      const VectorXd m = random_vector(rng, r, 2.0), lp = random_vector(rng, r, 2.0);
      const VectorXd pm = random_vector(rng, r, 2.0), plp = random_vector(rng, r, 2.0);
      const double kl = kl_row(m, lp, pm, plp);
      CHECK(kl >= -1e-12);
      CHECK(kl > 1e-12);  // continuous draws never coincide with the prior
      CHECK(std::abs(kl_row(pm, plp, pm, plp)) <= 1e-12);
    }
  }
}

TEST_CASE("gaussian log density decreases with the residual at fixed variance") {
  double previous = gaussian_log_density(1.0, 1.0, 0.0);
  CHECK(previous == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-15));
  for (double r = 0.1; r < 5.0; r += 0.1) {
    const double now = gaussian_log_density(1.0 + r, 1.0, 0.0);
    CHECK(now < previous);
    CHECK(gaussian_log_density(1.0 - r, 1.0, 0.0) == doctest::Approx(now).epsilon(1e-14));
    previous = now;
  }
}

TEST_CASE("elbo_minibatch") {
  SUBCASE("perfect reconstruction with posteriors at the prior") {
    const double x = 0.73;
    VaecpModel m = VaecpModel::zeros({2, 3, 2}, 2, 4);
    m.decoder.b_mu = x;
    ObservedEntrySet batch({2, 3, 2});
    batch.add(MultiIndex{1, 2, 0}, x);
    const ElboReport r = elbo_minibatch(m, batch, {1, 1, 0});
    CHECK(r.kl_term == 0.0);
    CHECK(std::abs(r.total + 0.5 * std::log(2 * std::numbers::pi)) < 1e-9);
    CHECK(r.entry_count == 1);
  }

  SUBCASE("single entry matches a scalar end-to-end evaluation") {
    const Dims dims{2, 3};
    const std::size_t R = 2, K = 3;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const VaecpModel m = random_model(dims, R, K, seed);
      ObservedEntrySet batch(dims);
      const MultiIndex idx{1, 2};
      const double x = 0.4 - 0.1 * static_cast<double>(seed);
      batch.add(idx, x);
      const MinibatchOptions opts{7, 1, 1000 + seed};
      const ElboReport r = elbo_minibatch(m, batch, opts);

      // Oracle: same noise stream, every step spelled out with scalars.
      Rng rng(derive_seed(opts.seed, 0, 0));
      std::vector<double> u(dims.size() * R);
      for (std::size_t d = 0; d < dims.size(); ++d)
        for (std::size_t k = 0; k < R; ++k) {
          const double eps = rng.normal();
          const double mean = m.posterior.mean[d](idx[d], k);
          const double var = 1.0 / std::exp(m.posterior.log_precision[d](idx[d], k));
          u[d * R + k] = mean + std::sqrt(var) * eps;
        }
      const DecodeResult out = scalar_decode(m.decoder, u);
      const double sigma2 = std::exp(out.log_sigma2);
      const double recon = -0.5 * std::log(2 * std::numbers::pi * sigma2) - (x - out.mu) * (x - out.mu) / (2 * sigma2);
      double kl = 0.0;
      for (std::size_t d = 0; d < dims.size(); ++d)
        for (std::size_t i = 0; i < dims[d]; ++i)
          for (std::size_t k = 0; k < R; ++k) {
            const double lam = std::exp(m.posterior.log_precision[d](i, k));
            const double lam0 = std::exp(m.posterior.prior_log_precision[k]);
            const double dm = m.posterior.mean[d](i, k) - m.posterior.prior_mean[k];
            kl += 0.5 * (lam0 / lam + lam0 * dm * dm - 1.0 + std::log(lam) - std::log(lam0));
          }
      kl /= 7.0;
      CHECK(std::abs(r.recon_term - recon) < 1e-10);
      CHECK(std::abs(r.kl_term - kl) < 1e-10);
      CHECK(std::abs(r.total - (recon - kl)) < 1e-10);
    }
  }

  SUBCASE("doubling total_observed halves the KL term") {
    const VaecpModel m = random_model({3, 3, 3}, 2, 3, 8);
    ObservedEntrySet batch({3, 3, 3});
    batch.add(MultiIndex{0, 1, 2}, 0.5);
    batch.add(MultiIndex{2, 2, 0}, -1.0);
    const ElboReport a = elbo_minibatch(m, batch, {10, 1, 4});
    const ElboReport b = elbo_minibatch(m, batch, {20, 1, 4});
    CHECK(b.kl_term == 0.5 * a.kl_term);
    CHECK(b.recon_term == a.recon_term);
    CHECK(a.kl_term >= 0.0);
  }

  SUBCASE("argument errors") {
    const VaecpModel m = random_model({3, 3}, 2, 3, 1);
    ObservedEntrySet batch({3, 3});
    CHECK_THROWS_AS(elbo_minibatch(m, batch, {10, 1, 0}), Error);
    batch.add(MultiIndex{0, 0}, 1.0);
    batch.add(MultiIndex{0, 1}, 1.0);
    CHECK_THROWS_AS(elbo_minibatch(m, batch, {10, 0, 0}), Error);
    CHECK_THROWS_AS(elbo_minibatch(m, batch, {1, 1, 0}), Error);
    ObservedEntrySet other({3, 4});
    other.add(MultiIndex{0, 0}, 1.0);
    CHECK_THROWS_AS(elbo_minibatch(m, other, {10, 1, 0}), Error);
  }

  SUBCASE("non-finite values are reported with the entry") {
    VaecpModel m = VaecpModel::zeros({2, 2}, 1, 1);
    m.decoder.b_sigma = -800.0;  // sigma^2 underflows to zero
    ObservedEntrySet batch({2, 2});
    batch.add(MultiIndex{1, 0}, 1.0);
    try {
      elbo_minibatch(m, batch, {4, 1, 0});
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Numeric);
      CHECK(std::string(e.what()).find("(2,1)") != std::string::npos);
    }
    CHECK_THROWS_AS(grad_elbo_minibatch(m, batch, {4, 1, 0}), Error);
  }

  SUBCASE("deterministic for a fixed seed, different across seeds") {
    const VaecpModel m = random_model({3, 3, 3}, 2, 3, 8);
    ObservedEntrySet batch({3, 3, 3});
    batch.add(MultiIndex{0, 1, 2}, 0.5);
    const ElboReport a = elbo_minibatch(m, batch, {10, 2, 4});
    const ElboReport b = elbo_minibatch(m, batch, {10, 2, 4});
    CHECK(a.total == b.total);
    CHECK(elbo_minibatch(m, batch, {10, 2, 5}).total != a.total);
  }
}

TEST_CASE("grad_elbo_minibatch") {
  SUBCASE("matches central differences on the reference instance") {
    const GradcheckReport r = gradcheck(GradcheckOptions{});
    CAPTURE(r.worst_coordinate);
    CHECK(r.max_relative_error < 1e-6);
    CHECK(r.parameter_count == 140);
  }
  SUBCASE("matches central differences with several samples and other shapes") {
    GradcheckOptions o;
    o.dims = {3, 2, 4, 2};
    o.rank = 2;
    o.hidden = 4;
    o.batch_size = 10;
    o.samples = 3;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      o.seed = seed;
      CHECK(gradcheck(o).max_relative_error < 1e-6);
    }
  }
  SUBCASE("gradient value equals the ELBO of the same call") {
    const GradcheckInstance inst = make_gradcheck_instance(GradcheckOptions{});
    const ElboGradient g = grad_elbo_minibatch(inst.model, inst.batch, inst.minibatch);
    const ElboReport r = elbo_minibatch(inst.model, inst.batch, inst.minibatch);
    CHECK(g.report.total == doctest::Approx(r.total).epsilon(1e-14));
    CHECK(g.report.kl_term == doctest::Approx(r.kl_term).epsilon(1e-14));
  }
  SUBCASE("prior-mean gradient vanishes when every row mean equals the prior mean") {
    VaecpModel m = random_model({3, 4}, 3, 2, 6);
    for (auto& mean : m.posterior.mean)
      for (Eigen::Index i = 0; i < mean.rows(); ++i) mean.row(i) = m.posterior.prior_mean.transpose();
    ObservedEntrySet batch({3, 4});
    batch.add(MultiIndex{2, 3}, 1.0);
    const ElboGradient g = grad_elbo_minibatch(m, batch, {6, 1, 2});
    CHECK(g.grad.posterior.prior_mean.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero decoder on zero-valued data has no mean-bias gradient") {
    const VaecpModel m = VaecpModel::zeros({3, 3, 3}, 2, 4);
    ObservedEntrySet batch({3, 3, 3});
    batch.add(MultiIndex{0, 0, 0}, 0.0);
    batch.add(MultiIndex{1, 2, 0}, 0.0);
    const ElboGradient g = grad_elbo_minibatch(m, batch, {5, 1, 3});
    CHECK(g.grad.decoder.b_mu == 0.0);
  }
  SUBCASE("whole-data KL gradients match the closed forms") {
    // With x far from the decoder support removed (zero decoder), only the
    // KL gradients touch the prior; compare with the analytic expressions.
    VaecpModel m = random_model({2, 3}, 2, 3, 12);
    m.decoder = DecoderParams::zeros(4, 3);
    ObservedEntrySet batch({2, 3});
    batch.add(MultiIndex{0, 0}, 0.0);
    const double scale = 1.0 / 6.0;
    const ElboGradient g = grad_elbo_minibatch(m, batch, {6, 1, 1});
    const auto& s = m.posterior;
    const Eigen::ArrayXd lam0 = s.prior_log_precision.array().exp();
    Eigen::ArrayXd expect_mu = Eigen::ArrayXd::Zero(2), expect_lam = Eigen::ArrayXd::Zero(2);
    for (std::size_t d = 0; d < 2; ++d)
      for (Eigen::Index i = 0; i < s.mean[d].rows(); ++i) {
        const Eigen::ArrayXd diff = s.mean[d].row(i).transpose().array() - s.prior_mean.array();
        const Eigen::ArrayXd lam = s.log_precision[d].row(i).transpose().array().exp();
        expect_mu += lam0 * diff;
        // d(-KL)/d(lam0) = -0.5 diff^2 + 0.5 (1/lam0 - 1/lam); chain rule to log lam0
        expect_lam += lam0 * (-0.5 * diff.square() + 0.5 * (1.0 / lam0 - 1.0 / lam));
      }
    for (int r = 0; r < 2; ++r) {
      CHECK(g.grad.posterior.prior_mean[r] == doctest::Approx(scale * expect_mu[r]).epsilon(1e-12));
      CHECK(g.grad.posterior.prior_log_precision[r] == doctest::Approx(scale * expect_lam[r]).epsilon(1e-12));
    }
  }
}

TEST_CASE("predict_entry") {
  SUBCASE("all-zero decoder predicts zero") {
    const VaecpModel m = init_model({3, 4, 5}, 2, 3, 1);
    VaecpModel z = m;
    z.decoder = DecoderParams::zeros(6, 3);
    CHECK(predict_entry(z, MultiIndex{2, 3, 4}) == 0.0);
  }
  SUBCASE("constant network predicts its bias") {
    VaecpModel m = init_model({3, 4, 5}, 2, 3, 1);
    m.decoder = DecoderParams::zeros(6, 3);
    m.decoder.b_mu = -1.25;
    CHECK(predict_entry(m, MultiIndex{0, 0, 0}) == -1.25);
  }
  SUBCASE("equals decode at the concatenated posterior means") {
    const VaecpModel m = random_model({3, 4, 5}, 2, 3, 9);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const MultiIndex idx{rng.uniform_index(3), rng.uniform_index(4), rng.uniform_index(5)};
      VectorXd u(6);
      for (std::size_t d = 0; d < 3; ++d) u.segment(2 * d, 2) = m.posterior.mean[d].row(idx[d]).transpose();
      CHECK(predict_entry(m, idx) == decode(m.decoder, u).mu);
    }
    CHECK_THROWS_AS(predict_entry(m, MultiIndex{3, 0, 0}), Error);
  }
}

TEST_CASE("init_model") {
  const VaecpModel a = init_model({5, 6, 7}, 3, 8, 42);
  CHECK(a == init_model({5, 6, 7}, 3, 8, 42));
  CHECK_FALSE(a == init_model({5, 6, 7}, 3, 8, 43));
  CHECK(a.decoder.b.isZero());
  CHECK(a.decoder.b_mu == 0.0);
  CHECK(a.decoder.b_sigma == 0.0);
  for (const auto& lp : a.posterior.log_precision) CHECK((lp.array() == kInitLogPrecision).all());
  double w2 = 0.0;
  for (Eigen::Index i = 0; i < a.decoder.W.size(); ++i) w2 += a.decoder.W.data()[i] * a.decoder.W.data()[i];
  // 72 draws with variance 0.25/9
  CHECK(std::abs(w2 / 72.0 - 0.25 / 9.0) < 0.5 * 0.25 / 9.0);
  CHECK(a.posterior.prior_mean.isZero());
  CHECK(a.posterior.prior_log_precision.isZero());
  CHECK(kl_total(a.posterior) > 0.0);
  CHECK_THROWS_AS(init_model({5, 6, 7}, 0, 8, 1), Error);
  CHECK_THROWS_AS(init_model({5, 6, 7}, 3, 0, 1), Error);

  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    VectorXd u = random_vector(rng, 9, 5.0);
    u = u.cwiseMax(-10.0).cwiseMin(10.0);
    const DecodeResult out = decode(a.decoder, u);
    CHECK(std::isfinite(out.mu));
    CHECK(std::abs(out.log_sigma2) < 10.0);
  }
}

TEST_CASE("flatten and unflatten share one layout") {
  const VaecpModel m = random_model({2, 3, 4}, 2, 3, 5);
  CHECK(parameter_count(m) == 3 * 6 + 3 + 3 + 1 + 3 + 1 + 2 * (2 + 3 + 4) * 2 + 2 + 2);
  const std::vector<double> flat = flatten(m);
  CHECK(flat.front() == m.decoder.W(0, 0));
  CHECK(flat[1] == m.decoder.W(0, 1));
  CHECK(flat[18 + 3 + 3] == m.decoder.b_mu);
  CHECK(flat.back() == m.posterior.prior_log_precision[1]);
  VaecpModel copy = VaecpModel::zeros({2, 3, 4}, 2, 3);
  unflatten(flat, copy);
  CHECK(copy == m);
  CHECK_THROWS_AS(unflatten(std::vector<double>(3), copy), Error);
}
