#include <gtest/gtest.h>

#include <cmath>

#include "hcd/error.hpp"
#include "hcd/svr.hpp"
#include "oracles.hpp"

namespace {

std::vector<double> flat_rows(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

hcd::SvrHyper random_hyper(hcd::Engine& e) {
  hcd::SvrHyper h;
  h.penalty = std::exp(std::log(0.1) + hcd::uniform01(e) * std::log(100.0));
  h.insensitivity = 0.01 + 0.2 * hcd::uniform01(e);
  h.kernel_width = 0.3 + 1.5 * hcd::uniform01(e);
  return h;
}

TEST(Svr, QuadraticLossPieces) {
  EXPECT_EQ(hcd::quadratic_eps_loss(0.05, 0.1), 0.0);
  EXPECT_EQ(hcd::quadratic_eps_loss(0.1, 0.1), 0.0);
  EXPECT_NEAR(hcd::quadratic_eps_loss(0.5, 0.1), 0.25 - 0.1 + 0.01, 1e-15);
}

TEST(Svr, CostAgreesWithOracle) {
  auto e = hcd::make_engine(2);
  const auto set = oracle::random_problem(e, 12, 2, 3);
  const auto h = random_hyper(e);
  const auto model = hcd::svr_fit(set, h);
  const std::vector<double> bias(model->bias().data(), model->bias().data() + model->bias().size());
  EXPECT_NEAR(hcd::svr_cost(*model, set, h),
              oracle::svr_cost(oracle::to_rows(set.inputs()), oracle::to_rows(set.targets()),
                               flat_rows(model->coefficients()), bias, h),
              1e-9);
}

TEST(Svr, CostHistoryNeverIncreases) {
  auto e = hcd::make_engine(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto set = oracle::random_problem(e, 5 + hcd::uniform_index(e, 40), 1 + hcd::uniform_index(e, 3),
                                            1 + hcd::uniform_index(e, 3), 0.2);
    const auto model = hcd::svr_fit(set, random_hyper(e));
    const auto& hist = model->cost_history();
    ASSERT_GE(hist.size(), 1u);
    for (std::size_t i = 1; i < hist.size(); ++i) {
      ASSERT_LE(hist[i], hist[i - 1]);
    }
  }
}

TEST(Svr, ReachesGenericMinimizerCost) {
  auto e = hcd::make_engine(11);
  for (int trial = 0; trial < 6; ++trial) {
    const auto set = oracle::random_problem(e, 8 + hcd::uniform_index(e, 15), 1 + hcd::uniform_index(e, 3),
                                            1 + hcd::uniform_index(e, 3));
    const auto h = random_hyper(e);
    const auto model = hcd::svr_fit(set, h);
    const double ours = hcd::svr_cost(*model, set, h);
    const double reference = oracle::svr_generic_minimum(oracle::to_rows(set.inputs()),
                                                         oracle::to_rows(set.targets()), h, 3, trial);
    EXPECT_LE(std::abs(ours - reference), 0.01 * reference) << "ours " << ours << " ref " << reference;
  }
}

TEST(Svr, WideTubeReportsTrivialModel) {
  auto e = hcd::make_engine(3);
  const auto set = oracle::random_problem(e, 10, 2, 1, 0.0);
  hcd::SvrHyper h;
  h.insensitivity = 100.0;
  const auto model = hcd::svr_fit(set, h);
  EXPECT_EQ(model->support_count(), 0u);
  EXPECT_NE(model->diagnosis().find("epsilon"), std::string::npos);
  EXPECT_EQ(hcd::svr_cost(*model, set, h), 0.0);
}

TEST(Svr, SupportVectorsLieOnOrOutsideTube) {
  auto e = hcd::make_engine(5);
  const auto set = oracle::random_problem(e, 40, 2, 2, 0.3);
  hcd::SvrHyper h;
  h.insensitivity = 0.2;
  h.penalty = 10.0;
  const auto model = hcd::svr_fit(set, h);
  const auto mu = hcd::residual_norms(*model, set);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < set.rows(); ++i) {
    if (!model->support()[i]) {
      // Non-support rows sit inside the tube at the optimum, up to the
      // solver's tolerance.
      EXPECT_LE(mu[static_cast<Eigen::Index>(i)], h.insensitivity + 1e-3);
      ++inside;
    }
  }
  EXPECT_GT(model->support_count(), 0u);
  EXPECT_LT(model->support_count(), set.rows());
  EXPECT_EQ(inside + model->support_count(), set.rows());
}

TEST(Svr, PredictMatchesKernelExpansion) {
  auto e = hcd::make_engine(9);
  const auto set = oracle::random_problem(e, 20, 2, 2);
  const auto model = hcd::svr_fit(set, hcd::SvrHyper{});
  const std::vector<double> x{0.3, 0.6};
  const auto y = hcd::svr_predict(*model, x);
  for (std::size_t c = 0; c < 2; ++c) {
    double expected = model->bias()[static_cast<Eigen::Index>(c)];
    for (std::size_t i = 0; i < set.rows(); ++i) {
      const double d0 = x[0] - set.inputs()(i, 0);
      const double d1 = x[1] - set.inputs()(i, 1);
      expected += std::exp(-(d0 * d0 + d1 * d1) / 2.0) * model->coefficients()(i, c);
    }
    EXPECT_NEAR(y[c], expected, 1e-12);
  }
}

TEST(Svr, Validation) {
  auto e = hcd::make_engine(1);
  const auto set = oracle::random_problem(e, 5, 1, 1);
  hcd::SvrHyper h;
  h.penalty = 0.0;
  EXPECT_THROW((void)hcd::svr_fit(set, h), hcd::InvalidArgument);
  h = {};
  h.insensitivity = -0.1;
  EXPECT_THROW((void)hcd::svr_fit(set, h), hcd::InvalidArgument);
  h = {};
  h.kernel_width = 0.0;
  EXPECT_THROW((void)hcd::svr_fit(set, h), hcd::InvalidArgument);
}

}  // namespace
