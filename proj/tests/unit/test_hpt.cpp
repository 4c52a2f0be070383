#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "hcd/error.hpp"
#include "hcd/hpt.hpp"
#include "oracles.hpp"

namespace {

hcd::HptHyper hyper(int k, double gamma, hcd::DistanceNorm norm = hcd::DistanceNorm::relative, bool wn = true) {
  hcd::HptHyper h;
  h.neighbours = k;
  h.kernel_width = gamma;
  h.distance_norm = norm;
  h.weight_norm = wn;
  return h;
}

TEST(Hpt, KnnMatchesExhaustiveOracle) {
  auto e = hcd::make_engine(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + hcd::uniform_index(e, 200);
    const std::size_t p = 1 + hcd::uniform_index(e, 4);
    auto set = oracle::random_problem(e, m, p, 1);
    if (trial % 4 == 0) {
      // Quantized inputs create exact distance ties.
      hcd::RowMatrix x = set.inputs();
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::round(x.data()[i] * 3.0);
      set = hcd::TrainingSet(x, set.targets());
    }
    const int k = 1 + static_cast<int>(hcd::uniform_index(e, m));
    const auto model = hcd::hpt_fit(set, hyper(k, 1.0));
    std::vector<double> q(p);
    for (auto& v : q) v = trial % 4 == 0 ? std::round(3.0 * hcd::uniform01(e)) : hcd::uniform01(e);
    const auto got = hcd::knn(q, *model);
    const auto want = oracle::brute_knn(q, oracle::to_rows(set.inputs()), static_cast<std::size_t>(k));
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].index, want[i].first);
      ASSERT_EQ(got[i].distance, want[i].second);
    }
  }
}

TEST(Hpt, KnnWithKEqualMAndExactMatch) {
  auto e = hcd::make_engine(2);
  const auto set = oracle::random_problem(e, 9, 2, 1);
  const auto model = hcd::hpt_fit(set, hyper(9, 1.0));
  const std::vector<double> q{set.inputs()(4, 0), set.inputs()(4, 1)};
  const auto n = hcd::knn(q, *model);
  ASSERT_EQ(n.size(), 9u);
  EXPECT_EQ(n[0].index, 4u);
  EXPECT_EQ(n[0].distance, 0.0);
  for (std::size_t i = 1; i < n.size(); ++i) EXPECT_GE(n[i].distance, n[i - 1].distance);
}

TEST(Hpt, NormalizeDistancesExamples) {
  const std::vector<double> d{1, 2, 4};
  const auto r = hcd::normalize_distances(d, hcd::DistanceNorm::relative, 99.0);
  EXPECT_EQ(r, (std::vector<double>{0.25, 0.5, 1.0}));
  const auto a = hcd::normalize_distances(d, hcd::DistanceNorm::absolute, 8.0);
  EXPECT_EQ(a, (std::vector<double>{0.125, 0.25, 0.5}));
  const std::vector<double> zeros{0, 0};
  EXPECT_EQ(hcd::normalize_distances(zeros, hcd::DistanceNorm::relative, 0.0), zeros);
  EXPECT_EQ(hcd::normalize_distances(zeros, hcd::DistanceNorm::absolute, 0.0), zeros);
  auto e = hcd::make_engine(3);
  std::vector<double> rnd(10);
  for (auto& v : rnd) v = hcd::uniform01(e);
  const auto rn = hcd::normalize_distances(rnd, hcd::DistanceNorm::relative, 0.0);
  EXPECT_EQ(*std::max_element(rn.begin(), rn.end()), 1.0);
}

TEST(Hpt, HandDerivedTwoNeighbourExample) {
  // Training rows at 1 and 2 on a line, query at 0: relative distances
  // (0.5, 1.0).
  hcd::RowMatrix x(2, 1);
  x << 1.0, 2.0;
  hcd::RowMatrix y(2, 2);
  y << 3.0, -1.0, 7.0, 4.0;
  const auto model = hcd::hpt_fit(hcd::TrainingSet(x, y), hyper(2, 1.0));
  const std::vector<double> q{0.0};
  const auto out = hcd::hpt_predict(q, *model);
  const double w1 = std::exp(-0.5);
  const double w2 = std::exp(-1.0);
  EXPECT_NEAR(out[0], (w1 * 3.0 + w2 * 7.0) / (w1 + w2), 1e-12);
  EXPECT_NEAR(out[1], (w1 * -1.0 + w2 * 4.0) / (w1 + w2), 1e-12);

  const auto raw = hcd::hpt_predict(q, *hcd::hpt_fit(hcd::TrainingSet(x, y), hyper(2, 1.0, hcd::DistanceNorm::relative, false)));
  EXPECT_NEAR(raw[0], w1 * 3.0 + w2 * 7.0, 1e-12);
}

TEST(Hpt, GammaZeroGivesNeighbourMean) {
  auto e = hcd::make_engine(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = oracle::random_problem(e, 30, 2, 3);
    const int k = 1 + static_cast<int>(hcd::uniform_index(e, 30));
    const auto model = hcd::hpt_fit(set, hyper(k, 0.0, trial % 2 ? hcd::DistanceNorm::absolute : hcd::DistanceNorm::relative));
    const std::vector<double> q{hcd::uniform01(e), hcd::uniform01(e)};
    const auto n = hcd::knn(q, *model);
    const auto out = hcd::hpt_predict(q, *model);
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (const auto& nb : n) sum += set.targets()(static_cast<Eigen::Index>(nb.index), static_cast<Eigen::Index>(c));
      EXPECT_EQ(out[c], sum / static_cast<double>(k));
    }
  }
}

TEST(Hpt, LargeGammaGivesNearestNeighbour) {
  auto e = hcd::make_engine(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = oracle::random_problem(e, 40, 2, 2);
    const auto model = hcd::hpt_fit(set, hyper(10, 1e6, trial % 2 ? hcd::DistanceNorm::absolute : hcd::DistanceNorm::relative));
    const std::vector<double> q{hcd::uniform01(e), hcd::uniform01(e)};
    const auto n = hcd::knn(q, *model);
    const auto out = hcd::hpt_predict(q, *model);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(out[c], set.targets()(static_cast<Eigen::Index>(n[0].index), static_cast<Eigen::Index>(c)), 1e-6);
    }
  }
}

TEST(Hpt, KOneIsNearestNeighbour) {
  auto e = hcd::make_engine(6);
  const auto set = oracle::random_problem(e, 25, 3, 2);
  const auto model = hcd::hpt_fit(set, hyper(1, 100.0));
  const std::vector<double> q{0.1, 0.5, 0.9};
  const auto n = hcd::knn(q, *model);
  const auto out = hcd::hpt_predict(q, *model);
  EXPECT_EQ(out[0], set.targets()(static_cast<Eigen::Index>(n[0].index), 0));
}

TEST(Hpt, PredictionIsConvexCombination) {
  auto e = hcd::make_engine(7);
  const auto set = oracle::random_problem(e, 50, 2, 2);
  const auto model = hcd::hpt_fit(set, hyper(8, 5.0, hcd::DistanceNorm::absolute));
  hcd::RowMatrix batch(30, 2);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = hcd::uniform01(e);
  const auto out = model->predict(batch);
  const double gmax = model->batch_max_distance(batch);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const std::vector<double> q{batch(i, 0), batch(i, 1)};
    const auto n = hcd::knn(q, *model);
    const auto single = hcd::hpt_predict(q, *model, gmax);
    for (Eigen::Index c = 0; c < 2; ++c) {
      double lo = 1e300;
      double hi = -1e300;
      for (const auto& nb : n) {
        lo = std::min(lo, set.targets()(static_cast<Eigen::Index>(nb.index), c));
        hi = std::max(hi, set.targets()(static_cast<Eigen::Index>(nb.index), c));
      }
      EXPECT_GE(out(i, c), lo - 1e-12);
      EXPECT_LE(out(i, c), hi + 1e-12);
      EXPECT_EQ(out(i, c), single[static_cast<std::size_t>(c)]);
    }
  }
}

TEST(Hpt, AbsoluteModeUsesBatchMaximum) {
  hcd::RowMatrix x(3, 1);
  x << 0.0, 1.0, 3.0;
  hcd::RowMatrix y(3, 1);
  y << 0.0, 1.0, 2.0;
  const auto model = hcd::hpt_fit(hcd::TrainingSet(x, y), hyper(2, 1.0, hcd::DistanceNorm::absolute));
  hcd::RowMatrix batch(2, 1);
  batch << 0.0, 10.0;
  // K-th distances: 1 for the first query, 9 for the second.
  EXPECT_EQ(model->batch_max_distance(batch), 9.0);
  const auto out = model->predict(batch);
  const double w0 = 1.0;
  const double w1 = std::exp(-1.0 / 9.0);
  EXPECT_NEAR(out(0, 0), (w0 * 0.0 + w1 * 1.0) / (w0 + w1), 1e-12);
}

TEST(Hpt, Validation) {
  auto e = hcd::make_engine(8);
  const auto set = oracle::random_problem(e, 5, 1, 1);
  EXPECT_THROW((void)hcd::hpt_fit(set, hyper(6, 1.0)), hcd::InvalidArgument);
  EXPECT_THROW((void)hcd::hpt_fit(set, hyper(0, 1.0)), hcd::InvalidArgument);
  EXPECT_THROW((void)hcd::hpt_fit(set, hyper(2, -1.0)), hcd::InvalidArgument);
}

TEST(Hpt, WeightsDecreaseWithDistance) {
  hcd::RowMatrix x(3, 1);
  x << 1.0, 2.0, 4.0;
  hcd::RowMatrix y(3, 1);
  y << 1.0, 0.0, 0.0;
  // Increasing gamma moves weight to the nearest row (target 1).
  double prev = -1.0;
  for (const double g : {0.0, 0.5, 1.0, 2.0, 8.0}) {
    const auto model = hcd::hpt_fit(hcd::TrainingSet(x, y), hyper(3, g));
    const auto out = hcd::hpt_predict(std::vector<double>{0.0}, *model);
    EXPECT_GT(out[0], prev);
    prev = out[0];
  }
}

}  // namespace
