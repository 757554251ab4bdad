#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "alssl/augment.hpp"
#include "alssl/errors.hpp"

using namespace alssl;
using augment::AugmentKey;
using augment::AugmentPolicy;

namespace {

AugmentPolicy identity_policy() {
  AugmentPolicy p;
  p.jitter_sigma = 0.0;
  p.flip_probability = 0.0;
  p.shift_fraction = 0.0;
  return p;
}

}  // namespace

TEST(Augment, IdentityPolicyReturnsInput) {
  const std::vector<double> x{0.5, -1.0, 2.0, 3.5};
  const auto out = augment::augment(x, identity_policy(), AugmentKey{3, 0, 0, 0});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(out[static_cast<Eigen::Index>(i)], x[i]);

  const std::vector<double> img(16, 0.25);
  const auto out_img = augment::augment(img, identity_policy(), AugmentKey{3, 0, 0, 0}, augment::ImageShape{4, 4});
  for (Eigen::Index i = 0; i < out_img.size(); ++i) EXPECT_EQ(out_img[i], 0.25);
}

TEST(Augment, SameKeyIsDeterministic) {
  const std::vector<double> x{0.5, -1.0, 2.0, 3.5};
  const auto strong = AugmentPolicy::strong_default();
  const AugmentKey key{7, 2, 100, 1};
  EXPECT_EQ(augment::augment(x, strong, key), augment::augment(x, strong, key));
  const auto other = augment::augment(x, strong, AugmentKey{7, 2, 100, 2});
  EXPECT_NE(augment::augment(x, strong, key), other);
}

TEST(Augment, FullDropZeroesVectorBeforeJitter) {
  auto p = AugmentPolicy::strong_default();
  p.drop_probability = 1.0;
  p.jitter_sigma = 0.0;
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto out = augment::augment(x, p, AugmentKey{1, 0, 0, 0});
  EXPECT_EQ(out, Vector::Zero(4));
}

TEST(Augment, JitterHasRequestedSpreadAndNoBias) {
  auto p = identity_policy();
  p.jitter_sigma = 0.2;
  p.feature_scale = {1.0, 3.0};
  const std::vector<double> x{1.0, -2.0};
  const int n = 10000;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const auto out = augment::augment(x, p, AugmentKey{static_cast<std::uint64_t>(i), 0, 0, 0});
    for (int f = 0; f < 2; ++f) {
      const double d = out[f] - x[static_cast<std::size_t>(f)];
      sum[f] += d;
      sq[f] += d * d;
    }
  }
  for (int f = 0; f < 2; ++f) {
    const double sigma = 0.2 * p.feature_scale[static_cast<std::size_t>(f)];
    const double mean = sum[f] / n;
    const double sd = std::sqrt(sq[f] / n - mean * mean);
    EXPECT_LT(std::abs(sd - sigma) / sigma, 0.05);
    EXPECT_LT(std::abs(mean), 4.0 * sigma / std::sqrt(static_cast<double>(n)));
  }
}

TEST(Augment, ImageFlipMirrorsRows) {
  auto p = identity_policy();
  p.flip_probability = 1.0;
  const std::vector<double> img{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};  // 3 wide, 2 high
  const auto out = augment::augment(img, p, AugmentKey{0, 0, 0, 0}, augment::ImageShape{3, 2});
  const std::vector<double> expected{0.3, 0.2, 0.1, 0.6, 0.5, 0.4};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(out[static_cast<Eigen::Index>(i)], expected[i]);
}

TEST(Augment, ImageShiftKeepsValuesInRangeAndZeroFills) {
  auto p = identity_policy();
  p.shift_fraction = 0.5;
  const std::vector<double> img(64, 1.0);
  bool saw_fill = false;
  for (std::uint64_t id = 0; id < 20; ++id) {
    const auto out = augment::augment(img, p, AugmentKey{id, 0, 0, 0}, augment::ImageShape{8, 8});
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      EXPECT_TRUE(out[i] == 0.0 || out[i] == 1.0);
      saw_fill = saw_fill || out[i] == 0.0;
    }
  }
  EXPECT_TRUE(saw_fill);
}

TEST(Augment, StrongImageStaysInUnitRange) {
  const auto p = AugmentPolicy::strong_default();
  std::vector<double> img(36);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 35.0;
  for (std::uint64_t id = 0; id < 50; ++id) {
    const auto out = augment::augment(img, p, AugmentKey{id, 1, 2, 2}, augment::ImageShape{6, 6});
    EXPECT_GE(out.minCoeff(), 0.0);
    EXPECT_LE(out.maxCoeff(), 1.0);
  }
}

TEST(Augment, RejectsBadInput) {
  const std::vector<double> x{1.0, std::nan("")};
  EXPECT_THROW(augment::augment(x, identity_policy(), AugmentKey{}), InvalidInput);
  const std::vector<double> y(5, 0.0);
  EXPECT_THROW(augment::augment(y, identity_policy(), AugmentKey{}, augment::ImageShape{2, 2}), InvalidInput);
  auto p = identity_policy();
  p.feature_scale = {1.0};
  EXPECT_THROW(augment::augment(y, p, AugmentKey{}), InvalidInput);
}

TEST(AugmentPolicy, Validation) {
  auto weak = AugmentPolicy::weak_default();
  auto strong = AugmentPolicy::strong_default();
  EXPECT_NO_THROW(augment::validate_pair(weak, strong));
  weak.jitter_sigma = strong.jitter_sigma * 2;
  EXPECT_THROW(augment::validate_pair(weak, strong), InvalidInput);
  auto bad = AugmentPolicy::weak_default();
  bad.drop_probability = 0.5;
  EXPECT_THROW(bad.validate(), InvalidInput);
  auto range = AugmentPolicy::strong_default();
  range.scale_lo = 2.0;
  range.scale_hi = 1.0;
  EXPECT_THROW(range.validate(), InvalidInput);
}

TEST(Augment, FeatureStdIsPopulationStd) {
  Matrix m(4, 2);
  m << 1, 10, 2, 10, 3, 10, 4, 10;
  const auto s = augment::feature_std(m);
  EXPECT_NEAR(s[0], std::sqrt(1.25), 1e-15);
  EXPECT_EQ(s[1], 0.0);
}
