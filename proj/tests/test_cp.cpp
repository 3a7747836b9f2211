#include <doctest.h>

#include <cmath>

#include "vaecp/cp.hpp"
#include "vaecp/error.hpp"
#include "vaecp/rng.hpp"
#include "vaecp/synthetic.hpp"

using namespace vaecp;

namespace {

FactorMatrices random_factors(const Dims& dims, std::size_t rank, std::uint64_t seed) {
  return generate_synthetic(dims, rank, 0.0, seed).factors;
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::pow(a.values()[i] - b.values()[i], 2);
    den += std::pow(b.values()[i], 2);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("reconstruct_entry") {
  SUBCASE("all-ones rank 1") {
    std::vector<Eigen::MatrixXd> ones(3, Eigen::MatrixXd::Ones(2, 1));
    CHECK(reconstruct_entry(FactorMatrices(ones), MultiIndex{1, 0, 1}) == 1.0);
  }
  SUBCASE("hand-evaluated D=3, R=2") {
    Eigen::MatrixXd a(1, 2), b(1, 2), c(1, 2);
    a << 1, 2;
    b << 3, 4;
    c << 5, 6;
    // 1*3*5 + 2*4*6
    CHECK(reconstruct_entry(FactorMatrices({a, b, c}), MultiIndex{0, 0, 0}) == 63.0);
  }
  SUBCASE("a zero row annihilates") {
    FactorMatrices f = random_factors({3, 4, 5}, 3, 1);
    f[1].row(2).setZero();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 5; ++k) CHECK(reconstruct_entry(f, MultiIndex{i, 2, k}) == 0.0);
  }
  SUBCASE("out-of-range index") {
    CHECK_THROWS_AS(reconstruct_entry(random_factors({3, 4}, 2, 1), MultiIndex{3, 0}), Error);
  }
}

TEST_CASE("reconstruct_full agrees with reconstruct_entry") {
  std::vector<Eigen::MatrixXd> ones(3, Eigen::MatrixXd::Ones(2, 1));
  const DenseTensor all_ones = reconstruct_full(FactorMatrices(ones));
  for (double v : all_ones.values()) CHECK(v == 1.0);

  const FactorMatrices f = random_factors({5, 6, 7}, 4, 3);
  const DenseTensor full = reconstruct_full(f);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const MultiIndex idx{rng.uniform_index(5), rng.uniform_index(6), rng.uniform_index(7)};
    CHECK(full.at(idx) == reconstruct_entry(f, idx));
  }
}

TEST_CASE("CP multilinearity and column permutation invariance") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    FactorMatrices f = random_factors({3, 4, 5}, 3, 100 + trial);
    const MultiIndex idx{rng.uniform_index(3), rng.uniform_index(4), rng.uniform_index(5)};
    const double base = reconstruct_entry(f, idx);

    FactorMatrices scaled = f;
    scaled[1] *= 2.0;  // power-of-two scale keeps the comparison exact
    CHECK(reconstruct_entry(scaled, idx) == 2.0 * base);

    FactorMatrices permuted = f;
    for (std::size_t d = 0; d < 3; ++d) {
      permuted[d].col(0) = f[d].col(2);
      permuted[d].col(2) = f[d].col(0);
    }
    CHECK(reconstruct_entry(permuted, idx) == doctest::Approx(base).epsilon(1e-14));
  }
}

TEST_CASE("als_fit") {
  SUBCASE("empty training set and bad rank") {
    CHECK_THROWS_AS(als_fit(ObservedEntrySet({3, 3}), AlsOptions{}), Error);
    ObservedEntrySet one({2, 2});
    one.add(MultiIndex{0, 0}, 1.0);
    AlsOptions bad;
    bad.rank = 0;
    CHECK_THROWS_AS(als_fit(one, bad), Error);
  }

  SUBCASE("constant tensor with rank 1") {
    const double c = 2.5;
    DenseTensor t({4, 5, 6});
    for (double& v : t.values()) v = c;
    AlsOptions options;
    options.rank = 1;
    options.tol = 0.0;
    options.seed = 3;
    const DenseTensor fit = reconstruct_full(als_fit(ObservedEntrySet::from_dense(t), options).factors);
    for (double v : fit.values()) CHECK(std::abs(v - c) < 1e-8);
  }

  SUBCASE("noiseless rank 2 recovery for most seeds") {
    const SyntheticTensor truth = generate_synthetic({10, 10, 10}, 2, 0.0, 77);
    const ObservedEntrySet all = ObservedEntrySet::from_dense(truth.tensor);
    int recovered = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      AlsOptions options;
      options.rank = 2;
      options.max_iters = 200;
      options.tol = 0.0;
      options.seed = seed;
      const AlsResult fit = als_fit(all, options);
      CHECK(fit.rmse_trace.size() <= 200);
      if (relative_error(reconstruct_full(fit.factors), truth.tensor) < 1e-6) ++recovered;
    }
    CHECK(recovered >= 9);
  }

  SUBCASE("training RMSE never increases across sweeps") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const SyntheticTensor truth = generate_synthetic({8, 9, 7}, 3, 0.5, seed);
      const ObservedEntrySet all = ObservedEntrySet::from_dense(truth.tensor);
      const ObservedEntrySet train = split_observed(all, 0.6, seed).train;
      AlsOptions options;
      options.rank = 4;
      options.max_iters = 60;
      options.tol = -1.0;
      options.seed = seed;
      const AlsResult fit = als_fit(train, options);
      CHECK(fit.rmse_trace.size() == 60);
      for (std::size_t i = 1; i < fit.rmse_trace.size(); ++i)
        CHECK(fit.rmse_trace[i] <= fit.rmse_trace[i - 1] + 1e-9);
      CHECK(cp_rmse(fit.factors, train) == fit.rmse_trace.back());
    }
  }

  SUBCASE("rows without observations keep their initial values") {
    ObservedEntrySet sparse({3, 3});
    sparse.add(MultiIndex{0, 0}, 1.0);
    sparse.add(MultiIndex{1, 1}, 2.0);
    AlsOptions options;
    options.rank = 1;
    options.max_iters = 3;
    options.seed = 12;
    const FactorMatrices fit = als_fit(sparse, options).factors;
    // Initial draws for mode 0 come first in the stream: rows 0, 1, 2.
    Rng rng(12);
    rng.normal();
    rng.normal();
    CHECK(fit[0](2, 0) == rng.normal());
  }

  SUBCASE("deterministic given seed") {
    const ObservedEntrySet all = ObservedEntrySet::from_dense(generate_synthetic({5, 5, 5}, 2, 0.1, 1).tensor);
    AlsOptions options;
    options.rank = 2;
    options.seed = 5;
    const AlsResult a = als_fit(all, options), b = als_fit(all, options);
    CHECK(a.rmse_trace == b.rmse_trace);
    for (std::size_t d = 0; d < 3; ++d) CHECK(a.factors[d] == b.factors[d]);
  }
}
