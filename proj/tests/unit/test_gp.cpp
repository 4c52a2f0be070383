#include <gtest/gtest.h>

#include <cmath>

#include "hcd/error.hpp"
#include "hcd/gp.hpp"
#include "hcd/parallel.hpp"
#include "oracles.hpp"

namespace {

hcd::GpHyper fixed_hyper(hcd::Engine& e, std::size_t p, bool aniso) {
  hcd::GpHyper h;
  h.optimize = false;
  h.optimize_noise = false;
  h.signal_variance = 0.5 + 2.0 * hcd::uniform01(e);
  h.lengthscales.assign(aniso ? p : 1, 0.0);
  for (auto& l : h.lengthscales) l = 0.3 + hcd::uniform01(e);
  h.noise_variance = 1e-3 + 0.05 * hcd::uniform01(e);
  return h;
}

TEST(Gp, RbfMatchesDefinition) {
  hcd::GpHyper h;
  h.signal_variance = 2.0;
  h.lengthscales = {0.5, 2.0};
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{0.0, 0.0};
  const double expected = 2.0 * std::exp(-0.5 * (1.0 / 0.25 + 4.0 / 4.0));
  EXPECT_NEAR(hcd::rbf(a, b, h), expected, 1e-15);
  h.lengthscales = {0.5};
  EXPECT_NEAR(hcd::rbf(a, b, h), 2.0 * std::exp(-0.5 * 5.0 / 0.25), 1e-15);
}

TEST(Gp, PosteriorMeanMatchesDenseInverseOracle) {
  auto e = hcd::make_engine(100);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 2 + hcd::uniform_index(e, 19);
    const std::size_t p = 1 + hcd::uniform_index(e, 4);
    const std::size_t q = 1 + hcd::uniform_index(e, 4);
    const auto set = oracle::random_problem(e, m, p, q);
    const auto h = fixed_hyper(e, p, trial % 2 == 0);
    const auto model = hcd::gp_fit(set, h, 0);
    hcd::RowMatrix queries(7, p);
    for (Eigen::Index i = 0; i < queries.size(); ++i) queries.data()[i] = hcd::uniform01(e);
    const auto mean = hcd::gp_predict_mean(*model, queries);
    const auto expected = oracle::gp_posterior_mean(oracle::to_rows(set.inputs()), oracle::to_rows(set.targets()),
                                                    oracle::to_rows(queries), h);
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t c = 0; c < q; ++c) {
        ASSERT_NEAR(mean(i, c), expected[i][c], 1e-8);
      }
    }
  }
}

TEST(Gp, LikelihoodValueMatchesOracle) {
  auto e = hcd::make_engine(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto set = oracle::random_problem(e, 12, 2, 3);
    const auto h = fixed_hyper(e, 2, trial % 2 == 1);
    EXPECT_NEAR(hcd::log_marginal_likelihood(h, set).value,
                oracle::gp_log_likelihood(oracle::to_rows(set.inputs()), oracle::to_rows(set.targets()), h), 1e-8);
  }
}

TEST(Gp, GradientMatchesCentralDifferences) {
  auto e = hcd::make_engine(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 1 + hcd::uniform_index(e, 3);
    const auto set = oracle::random_problem(e, 5 + hcd::uniform_index(e, 10), p, 2);
    const auto h = fixed_hyper(e, p, trial % 2 == 0);
    const auto analytic = hcd::log_marginal_likelihood(h, set).gradient;
    const auto theta = hcd::pack_log_params(h);
    ASSERT_EQ(theta.size(), analytic.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      auto plus = theta;
      auto minus = theta;
      plus[i] += 1e-5;
      minus[i] -= 1e-5;
      const auto x = oracle::to_rows(set.inputs());
      const auto y = oracle::to_rows(set.targets());
      const double fd = (oracle::gp_log_likelihood(x, y, hcd::unpack_log_params(h, plus)) -
                         oracle::gp_log_likelihood(x, y, hcd::unpack_log_params(h, minus))) / 2e-5;
      ASSERT_LE(std::abs(fd - analytic[i]), 1e-4 * std::max(1.0, std::abs(fd))) << "param " << i;
    }
  }
}

TEST(Gp, OptimizationRaisesLikelihood) {
  auto e = hcd::make_engine(3);
  const auto set = oracle::random_problem(e, 40, 2, 2);
  hcd::GpHyper start;
  start.optimize = false;
  start.optimize_noise = false;
  start.lengthscales = {1.0, 1.0};
  start.noise_variance = 1e-2;
  const double before = hcd::log_marginal_likelihood(start, set).value;
  hcd::GpHyper h;
  h.restarts = 4;
  const auto model = hcd::gp_fit(set, h, 1);
  EXPECT_GT(model->log_likelihood(), before);
  ASSERT_EQ(model->restart_log_likelihoods().size(), 4u);
  for (const double v : model->restart_log_likelihoods()) {
    EXPECT_LE(v, model->log_likelihood() + 1e-12);
  }
  EXPECT_EQ(model->hyper().lengthscales.size(), 2u);
  EXPECT_GE(model->hyper().noise_variance, h.noise_floor);
}

TEST(Gp, FitIsDeterministicAcrossThreadCounts) {
  auto e = hcd::make_engine(21);
  const auto set = oracle::random_problem(e, 30, 3, 2);
  hcd::GpHyper h;
  h.restarts = 3;
  hcd::set_max_workers(1);
  const auto a = hcd::gp_fit(set, h, 9);
  hcd::set_max_workers(0);
  const auto b = hcd::gp_fit(set, h, 9);
  EXPECT_EQ(a->weights(), b->weights());
  EXPECT_EQ(a->hyper().lengthscales, b->hyper().lengthscales);
}

TEST(Gp, InterpolatesWithoutNoise) {
  auto e = hcd::make_engine(4);
  const auto set = oracle::random_problem(e, 10, 2, 1);
  hcd::GpHyper h;
  h.optimize = false;
  h.optimize_noise = false;
  h.noise_variance = 0.0;
  h.lengthscales = {0.4};
  const auto model = hcd::gp_fit(set, h, 0);
  const auto mean = hcd::gp_predict_mean(*model, set.inputs());
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(mean(i, 0), set.targets()(i, 0), 1e-6);
  }
}

TEST(Gp, SinglePointModel) {
  hcd::RowMatrix x(1, 2);
  x << 0.3, 0.4;
  hcd::RowMatrix y(1, 1);
  y << 2.0;
  hcd::GpHyper h;
  // One sample cannot separate signal from noise, so the noise stays fixed.
  h.optimize_noise = false;
  const auto model = hcd::gp_fit(hcd::TrainingSet(x, y), h, 0);
  EXPECT_NEAR(hcd::gp_predict_mean(*model, x)(0, 0), 2.0, 1e-3);
}

TEST(Gp, PosteriorCovarianceIsSymmetricWithNonNegativeDiagonal) {
  auto e = hcd::make_engine(6);
  const auto set = oracle::random_problem(e, 15, 2, 1);
  auto h = fixed_hyper(e, 2, true);
  const auto model = hcd::gp_fit(set, h, 0);
  hcd::RowMatrix q(6, 2);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = 2.0 * hcd::uniform01(e);
  const auto cov = hcd::gp_predict_cov(*model, q);
  EXPECT_EQ(cov, cov.transpose());
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_GE(cov(i, i), 0.0);
    EXPECT_LE(cov(i, i), h.signal_variance + 1e-12);
  }
}

TEST(Gp, Validation) {
  auto e = hcd::make_engine(1);
  const auto set = oracle::random_problem(e, 5, 2, 1);
  hcd::GpHyper h;
  h.signal_variance = -1.0;
  EXPECT_THROW((void)hcd::gp_fit(set, h, 0), hcd::InvalidArgument);
  h = {};
  h.optimize = false;
  h.lengthscales = {1.0, 1.0, 1.0};
  EXPECT_THROW((void)hcd::gp_fit(set, h, 0), hcd::DimensionMismatch);
  h = {};
  h.max_rows = 4;
  EXPECT_THROW((void)hcd::gp_fit(set, h, 0), hcd::InvalidArgument);
  h = {};
  h.restarts = 0;
  EXPECT_THROW((void)hcd::gp_fit(set, h, 0), hcd::InvalidArgument);
}

TEST(Gp, DuplicateRowsWithoutNoiseReportNumericalError) {
  hcd::RowMatrix x(2, 1);
  x << 0.5, 0.5;
  hcd::RowMatrix y(2, 1);
  y << 1.0, 2.0;
  hcd::GpHyper h;
  h.optimize = false;
  h.optimize_noise = false;
  h.noise_variance = 0.0;
  EXPECT_THROW((void)hcd::gp_fit(hcd::TrainingSet(x, y), h, 0), hcd::NumericalError);
}

}  // namespace
