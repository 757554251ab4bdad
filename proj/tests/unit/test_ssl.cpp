#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "alssl/errors.hpp"
#include "alssl/ssl.hpp"
#include "oracles.hpp"

using namespace alssl;
using ssl::ThresholdState;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

ThresholdState state(std::uint64_t step, std::size_t curr, std::size_t prev, std::size_t na, std::size_t k) {
  ThresholdState s;
  s.alpha = 0.9;
  s.beta = 0.05;
  s.t_max = 1000;
  s.step = step;
  s.count_curr = curr;
  s.count_prev = prev;
  s.annotated_last_cycle = na;
  s.selector_budget = k;
  return s;
}

}  // namespace

TEST(HighConfidenceCount, HandExample) {
  const auto p = rows({{0.96, 0.04}, {0.50, 0.50}, {0.99, 0.01}});
  EXPECT_EQ(ssl::count_high_confidence(p, 0.9, 0.05), 2u);
}

TEST(HighConfidenceCount, EmptyPool) { EXPECT_EQ(ssl::count_high_confidence(Matrix(0, 3), 0.9, 0.05), 0u); }

TEST(HighConfidenceCount, StrictInequality) {
  const auto p = rows({{0.95, 0.05}});
  EXPECT_EQ(ssl::count_high_confidence(p, 0.9, 0.05), 0u);
}

TEST(HighConfidenceCount, MatchesBruteForceScan) {
  std::mt19937_64 gen(1);
  Matrix p(100, 4);
  for (Eigen::Index i = 0; i < 100; ++i) {
    Vector v = oracle::random_simplex(4, gen);
    if (i % 3 == 0) {
      v *= 0.05;
      v[i % 4] += 0.95;
    }
    p.row(i) = v.transpose();
  }
  std::size_t expected = 0;
  for (Eigen::Index i = 0; i < 100; ++i) {
    bool any = false;
    for (Eigen::Index c = 0; c < 4; ++c) any = any || p(i, c) > 0.95;
    expected += any ? 1 : 0;
  }
  EXPECT_EQ(ssl::count_high_confidence(p, 0.9, 0.05), expected);
  EXPECT_GT(expected, 0u);
}

TEST(AdaptiveThreshold, PinnedAfterTmax) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(1000, 5, 100, 0, 40)), 0.95);
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(5000, 0, 0, 0, 0)), 0.95);
}

TEST(AdaptiveThreshold, HandExampleBeforeTmax) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 50, 100, 40, 40)), 0.9 * 0.5 + 0.05 * 0.5);
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 50, 100, 40, 40)), 0.475);
}

TEST(AdaptiveThreshold, RatioClampedAtOne) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 150, 100, 80, 40)), 0.95);
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 100, 100, 80, 40)), 0.95);
}

TEST(AdaptiveThreshold, ColdStartUsesUnitRatio) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(0, 0, 0, 0, 40)), 0.9);
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(0, 7, 0, 20, 40)), 0.9 + 0.05 * 0.25);
}

TEST(AdaptiveThreshold, ZeroBudgetDropsQuotaTerm) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 50, 100, 0, 0)), 0.45);
}

TEST(AdaptiveThreshold, FlooredAtMinimum) {
  EXPECT_DOUBLE_EQ(ssl::adaptive_threshold(state(10, 0, 100, 0, 40)), ssl::kMinThreshold);
}

TEST(AdaptiveThreshold, NonDecreasingInAnnotations) {
  for (std::size_t curr : {0u, 30u, 100u})
    for (std::size_t prev : {0u, 60u})
      for (std::size_t na = 0; na < 100; ++na)
        EXPECT_LE(ssl::adaptive_threshold(state(5, curr, prev, na, 40)),
                  ssl::adaptive_threshold(state(5, curr, prev, na + 1, 40)));
}

TEST(AdaptiveThreshold, BoundedByAlphaPlusBeta) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> d(0, 200);
  for (int i = 0; i < 500; ++i) {
    const double t = ssl::adaptive_threshold(state(d(gen), d(gen), d(gen), d(gen), 1 + d(gen)));
    EXPECT_GT(t, 0.0);
    EXPECT_LE(t, 0.95 + 1e-15);
  }
}

TEST(AdaptiveThreshold, RejectsInvalidState) {
  auto s = state(0, 0, 0, 0, 1);
  s.t_max = 0;
  EXPECT_THROW(ssl::adaptive_threshold(s), InvalidInput);
  s = state(0, 0, 0, 0, 1);
  s.alpha = 1.2;
  EXPECT_THROW(ssl::adaptive_threshold(s), InvalidInput);
}

TEST(ThresholdState, RecordCountShifts) {
  ThresholdState s;
  s.record_count(10);
  s.record_count(4);
  EXPECT_EQ(s.count_prev, 10u);
  EXPECT_EQ(s.count_curr, 4u);
}

TEST(SelectPseudo, ThresholdOneIsEmpty) {
  const auto p = rows({{1.0, 0.0}, {0.99, 0.01}});
  EXPECT_TRUE(ssl::select_pseudo(p, {0, 1}, 1.0).empty());
}

TEST(SelectPseudo, HandExample) {
  const auto p = rows({{0.98, 0.02}, {0.6, 0.4}});
  const auto b = ssl::select_pseudo(p, {0, 1}, 0.95);
  ASSERT_EQ(b.ids, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(b.labels, (std::vector<std::size_t>{0}));
  Matrix expected(1, 2);
  expected << 1, 0;
  EXPECT_EQ(b.one_hot(2), expected);
}

TEST(SelectPseudo, MatchesBruteForceAndPartitions) {
  std::mt19937_64 gen(9);
  Matrix p(200, 3);
  std::vector<std::uint64_t> ids(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    Vector v = oracle::random_simplex(3, gen);
    v[i % 3] += 1.5;
    p.row(i) = (v / v.sum()).transpose();
    ids[static_cast<std::size_t>(i)] = 1000 + 3 * static_cast<std::uint64_t>(i);
  }
  const auto b = ssl::select_pseudo(p, ids, 0.7);
  std::vector<std::uint64_t> want;
  std::vector<std::size_t> want_labels;
  for (Eigen::Index i = 0; i < 200; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < 3; ++c)
      if (p(i, c) > p(i, best)) best = c;
    if (p(i, best) > 0.7) {
      want.push_back(ids[static_cast<std::size_t>(i)]);
      want_labels.push_back(static_cast<std::size_t>(best));
    }
  }
  EXPECT_EQ(b.ids, want);
  EXPECT_EQ(b.labels, want_labels);

  const auto rest = ssl::complement(ids, b);
  std::set<std::uint64_t> all(rest.begin(), rest.end());
  for (auto id : b.ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all, std::set<std::uint64_t>(ids.begin(), ids.end()));
}

TEST(SelectPseudo, LowerThresholdSelectsSuperset) {
  std::mt19937_64 gen(2);
  Matrix p(50, 2);
  std::vector<std::uint64_t> ids(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    p.row(i) = oracle::random_simplex(2, gen).transpose();
    ids[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  }
  const auto hi = ssl::select_pseudo(p, ids, 0.9);
  const auto lo = ssl::select_pseudo(p, ids, 0.6);
  EXPECT_TRUE(std::includes(lo.ids.begin(), lo.ids.end(), hi.ids.begin(), hi.ids.end()));
}

TEST(UnsupervisedLoss, MatchingOneHotIsZero) {
  const auto p = rows({{0.99, 0.01}, {0.02, 0.98}});
  const auto b = ssl::select_pseudo(p, {4, 5}, 0.95);
  EXPECT_NEAR(ssl::unsupervised_loss(b, b.ids, b.one_hot(2), 1.0), 0.0, 1e-11);
}

TEST(UnsupervisedLoss, EmptyBatchIsZero) {
  EXPECT_EQ(ssl::unsupervised_loss(ssl::PseudoBatch{}, {}, Matrix(0, 2), 1.0), 0.0);
}

TEST(UnsupervisedLoss, HalfProbabilityIsLn2) {
  ssl::PseudoBatch b;
  b.ids = {7};
  b.labels = {0};
  b.confidences = {0.99};
  EXPECT_NEAR(ssl::unsupervised_loss(b, {7}, rows({{0.5, 0.5}}), 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ssl::unsupervised_loss(b, {7}, rows({{0.5, 0.5}}), 2.5), 2.5 * std::log(2.0), 1e-15);
}

TEST(UnsupervisedLoss, RejectsMisalignedIds) {
  ssl::PseudoBatch b;
  b.ids = {7};
  b.labels = {0};
  EXPECT_THROW(ssl::unsupervised_loss(b, {8}, rows({{0.5, 0.5}}), 1.0), InvalidInput);
}

TEST(TotalLoss, Sums) {
  EXPECT_DOUBLE_EQ(ssl::total_loss(0.3, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(ssl::total_loss(1.7, 0.0), 1.7);
  EXPECT_THROW(ssl::total_loss(std::nan(""), 0.0), InvalidInput);
}

TEST(TotalLoss, ComposesIndependentTerms) {
  std::mt19937_64 gen(5);
  Matrix labeled(6, 3), strong(4, 3);
  for (Eigen::Index i = 0; i < 6; ++i) labeled.row(i) = oracle::random_simplex(3, gen).transpose();
  for (Eigen::Index i = 0; i < 4; ++i) strong.row(i) = oracle::random_simplex(3, gen).transpose();
  const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0};
  ssl::PseudoBatch b;
  b.ids = {1, 2, 3, 4};
  b.labels = {2, 0, 0, 1};
  double sup = 0, uns = 0;
  for (Eigen::Index i = 0; i < 6; ++i) sup -= std::log(labeled(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])));
  for (Eigen::Index i = 0; i < 4; ++i) uns -= std::log(strong(i, static_cast<Eigen::Index>(b.labels[static_cast<std::size_t>(i)])));
  const double total = ssl::total_loss(nn::supervised_loss(labeled, nn::one_hot(y, 3)),
                                       ssl::unsupervised_loss(b, b.ids, strong, 1.0));
  EXPECT_NEAR(total, sup / 6 + uns / 4, 1e-13);
}
