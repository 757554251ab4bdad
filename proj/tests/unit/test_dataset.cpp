#include <filesystem>
#include <functional>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "alssl/dataset.hpp"
#include "alssl/errors.hpp"

using namespace alssl;


namespace {

data::DatasetSpec gauss(std::size_t classes, std::vector<std::size_t> counts, double noise, std::uint64_t seed = 0) {
  data::DatasetSpec s;
  s.kind = data::DatasetKind::gaussians;
  s.num_classes = classes;
  s.class_counts = std::move(counts);
  s.noise = noise;
  s.seed = seed;
  return s;
}

DataErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no DataError";
  return DataErrorCode::io;
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Synthetic, NoiselessPointsSitOnTheirMean) {
  const auto ds = data::gen_synthetic(gauss(2, {5, 5}, 0.0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (ds.label(i) == 0) {
      EXPECT_DOUBLE_EQ(ds.features(r, 0), 3.0);
      EXPECT_DOUBLE_EQ(ds.features(r, 1), 0.0);
    } else {
      EXPECT_NEAR(ds.features(r, 0), -3.0, 1e-15);
      EXPECT_NEAR(ds.features(r, 1), 0.0, 1e-15);
    }
  }
}

TEST(Synthetic, SameSeedSameData) {
  auto s = gauss(3, {20, 30, 10}, 1.0, 5);
  s.dim = 4;
  EXPECT_EQ(data::gen_synthetic(s), data::gen_synthetic(s));
  auto t = s;
  t.seed = 6;
  EXPECT_FALSE(data::gen_synthetic(s) == data::gen_synthetic(t));
}

TEST(Synthetic, IdsAreRowIndicesAndCountsHold) {
  const auto ds = data::gen_synthetic(gauss(3, {7, 2, 4}, 0.5));
  ASSERT_EQ(ds.size(), 13u);
  std::vector<std::size_t> per(3, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.ids[i], i);
    ++per[ds.label(i)];
  }
  EXPECT_EQ(per, (std::vector<std::size_t>{7, 2, 4}));
}

TEST(Synthetic, ImbalancedPreset) {
  const auto spec = data::DatasetSpec::imbalanced(970);
  EXPECT_EQ(spec.resolved_counts(), (std::vector<std::size_t>{870, 100}));
  const auto ds = data::gen_synthetic(spec);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) zeros += ds.label(i) == 0 ? 1 : 0;
  EXPECT_EQ(zeros, 870u);
}

TEST(Synthetic, RatioApportionment) {
  EXPECT_EQ(data::apportion(3000, {6, 3, 1}), (std::vector<std::size_t>{1800, 900, 300}));
  EXPECT_EQ(data::apportion(10, {1, 1, 1}), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(data::apportion(7, {2, 1}), (std::vector<std::size_t>{5, 2}));
}

TEST(Synthetic, OtherShapes) {
  auto s = gauss(2, {50, 50}, 0.05);
  s.kind = data::DatasetKind::moons;
  EXPECT_EQ(data::gen_synthetic(s).size(), 100u);
  s.kind = data::DatasetKind::rings;
  s.num_classes = 3;
  s.class_counts = {10, 10, 10};
  const auto rings = data::gen_synthetic(s);
  for (std::size_t i = 0; i < rings.size(); ++i) {
    const double radius = rings.features.row(static_cast<Eigen::Index>(i)).norm();
    EXPECT_NEAR(radius, static_cast<double>(rings.label(i) + 1), 0.3);
  }
}

TEST(Synthetic, RejectsDegenerateSpecs) {
  EXPECT_EQ(code_of([] { data::gen_synthetic(gauss(0, {}, 1.0)); }), DataErrorCode::degenerate);
  EXPECT_EQ(code_of([] { data::gen_synthetic(gauss(2, {5, 0}, 1.0)); }), DataErrorCode::degenerate);
  EXPECT_EQ(code_of([] { data::gen_synthetic(gauss(2, {5}, 1.0)); }), DataErrorCode::degenerate);
}

TEST(Csv, ThreeRowExample) {
  const auto ds = data::parse_csv("a,b,label\n1,2,0\n3,4,1\n5,6,0\n");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.ids, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_DOUBLE_EQ(ds.features(2, 1), 6.0);
}

TEST(Csv, EmptyLabelMeansUnlabeled) {
  const auto ds = data::parse_csv("x,y,label\n1,2,\n3,4,1\n", 3);
  EXPECT_FALSE(ds.labels[0].has_value());
  EXPECT_EQ(ds.labels[1], std::optional<std::size_t>{1});
  EXPECT_FALSE(ds.fully_labeled());
  EXPECT_THROW(ds.label(0), InvalidInput);
}

TEST(Csv, RoundTripIsExact) {
  auto s = gauss(3, {10, 10, 10}, 1.3, 2);
  s.dim = 3;
  auto ds = data::gen_synthetic(s);
  ds.labels[4].reset();
  const auto path = tmp("alssl_roundtrip.csv");
  data::save_csv(path, ds);
  const auto back = data::load_csv(path, 3);
  EXPECT_EQ(back, ds);
  std::filesystem::remove(path);
}

TEST(Csv, DistinctErrors) {
  EXPECT_EQ(code_of([] { data::parse_csv(""); }), DataErrorCode::malformed_header);
  EXPECT_EQ(code_of([] { data::parse_csv("label\n1\n"); }), DataErrorCode::malformed_header);
  EXPECT_EQ(code_of([] { data::parse_csv("a,,label\n1,2,0\n"); }), DataErrorCode::malformed_header);
  EXPECT_EQ(code_of([] { data::parse_csv("a,b,label\n1,0\n"); }), DataErrorCode::truncated_record);
  EXPECT_EQ(code_of([] { data::parse_csv("a,b,label\n1,2,3,0\n"); }), DataErrorCode::parse);
  EXPECT_EQ(code_of([] { data::parse_csv("a,b,label\n1,x,0\n"); }), DataErrorCode::parse);
  EXPECT_EQ(code_of([] { data::parse_csv("a,b,label\n1,2,5\n", 3); }), DataErrorCode::label_out_of_range);
  EXPECT_EQ(code_of([] { data::parse_csv("a,b,label\n1,2,-1\n"); }), DataErrorCode::label_out_of_range);
  EXPECT_EQ(code_of([] { data::load_csv("/nonexistent/file.csv"); }), DataErrorCode::io);
}

TEST(Idx, RoundTrip) {
  data::Dataset ds;
  ds.num_classes = 3;
  ds.image_shape = augment::ImageShape{3, 2};
  ds.features.resize(4, 6);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) ds.features(r, c) = static_cast<double>((r * 6 + c) * 10) / 255.0;
  ds.ids = {0, 1, 2, 3};
  ds.labels = {0, 2, 1, 2};
  const auto img = tmp("alssl_img.idx"), lab = tmp("alssl_lab.idx");
  data::save_idx(img, lab, ds);
  const auto back = data::load_idx(img, lab, 3);
  EXPECT_EQ(back.ids, ds.ids);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.image_shape, ds.image_shape);
  EXPECT_LT((back.features - ds.features).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(back.features.maxCoeff(), 1.0);

  const auto unlabeled = data::load_idx(img, std::nullopt, 3);
  EXPECT_FALSE(unlabeled.labels[0].has_value());
  std::filesystem::remove(img);
  std::filesystem::remove(lab);
}

TEST(Idx, WrongMagicAndTruncation) {
  const auto path = tmp("alssl_bad.idx");
  {
    std::ofstream out(path, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 1, 0, 0, 0, 1};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  }
  EXPECT_EQ(code_of([&] { data::load_idx(path, std::nullopt); }), DataErrorCode::bad_magic);
  {
    std::ofstream out(path, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  }
  EXPECT_EQ(code_of([&] { data::load_idx(path, std::nullopt); }), DataErrorCode::truncated_record);
  std::filesystem::remove(path);
}

TEST(Split, AllTrain) {
  const auto ds = data::gen_synthetic(gauss(2, {10, 10}, 1.0));
  const auto s = data::split(ds, {1.0, 0.0, 0.0}, 0);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_EQ(s.val.size(), 0u);
  EXPECT_EQ(s.test.size(), 0u);
}

TEST(Split, BalancedHundredFollowsRemainderRule) {
  const auto ds = data::gen_synthetic(gauss(2, {50, 50}, 1.0));
  const auto s = data::split(ds, {0.70, 0.15, 0.15}, 3);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 15u);
  EXPECT_EQ(s.test.size(), 15u);
  auto per_class = [](const data::Dataset& d) {
    std::vector<std::size_t> n(2, 0);
    for (std::size_t i = 0; i < d.size(); ++i) ++n[d.label(i)];
    return n;
  };
  EXPECT_EQ(per_class(s.train), (std::vector<std::size_t>{35, 35}));
  const auto v = per_class(s.val), t = per_class(s.test);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_TRUE(v[c] == 7 || v[c] == 8);
    EXPECT_EQ(v[c] + t[c], 15u);
  }
}

TEST(Split, PartitionsIdsAndPreservesProportions) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> cnt(10, 120);
    auto spec = gauss(3, {cnt(gen), cnt(gen), cnt(gen)}, 1.0, static_cast<std::uint64_t>(trial));
    const auto ds = data::gen_synthetic(spec);
    const auto s = data::split(ds, {0.7, 0.15, 0.15}, static_cast<std::uint64_t>(trial));
    std::set<std::uint64_t> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (auto id : part->ids) EXPECT_TRUE(seen.insert(id).second);
    EXPECT_EQ(seen.size(), ds.size());
    for (std::size_t c = 0; c < 3; ++c) {
      const double n = static_cast<double>(spec.class_counts[c]);
      std::size_t tr = 0;
      for (std::size_t i = 0; i < s.train.size(); ++i) tr += s.train.label(i) == c ? 1 : 0;
      EXPECT_LE(std::abs(static_cast<double>(tr) - 0.7 * n), 1.0);
    }
  }
}

TEST(Split, DeterministicPerSeed) {
  const auto ds = data::gen_synthetic(gauss(2, {40, 40}, 1.0));
  EXPECT_EQ(data::split(ds, {0.7, 0.15, 0.15}, 1).val, data::split(ds, {0.7, 0.15, 0.15}, 1).val);
}

TEST(Split, TinyClassIsRejected) {
  const auto ds = data::gen_synthetic(gauss(2, {40, 2}, 1.0));
  EXPECT_EQ(code_of([&] { data::split(ds, {0.7, 0.15, 0.15}, 0); }), DataErrorCode::degenerate);
}

TEST(Split, RejectsBadFractions) {
  const auto ds = data::gen_synthetic(gauss(2, {40, 40}, 1.0));
  EXPECT_THROW(data::split(ds, {0.7, 0.2, 0.2}, 0), InvalidInput);
}
