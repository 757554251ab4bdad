#include <filesystem>
#include <fstream>
#include <functional>

#include <gtest/gtest.h>

#include "alssl/config.hpp"
#include "alssl/errors.hpp"

using namespace alssl;

namespace {

std::string error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, EmptyTextGivesPublishedDefaults) {
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.ssl.alpha, 0.9);
  EXPECT_EQ(cfg.ssl.beta, 0.05);
  EXPECT_EQ(cfg.ssl.mu, 1.0);
  EXPECT_EQ(cfg.aus.tau, 1.0);
  EXPECT_EQ(cfg.bus.neighbors, 20u);
  EXPECT_EQ(cfg.optimizer.momentum, 0.9);
  EXPECT_EQ(cfg.optimizer.learning_rate, 0.03);
  EXPECT_EQ(cfg.optimizer.batch_size, 64u);
  EXPECT_EQ(cfg.loop.max_cycles, 30u);
  EXPECT_EQ(cfg.loop.initial_fraction, 0.10);
  EXPECT_EQ(cfg.dataset.split.train, 0.70);
  EXPECT_EQ(parse_config("{}").ssl.alpha, 0.9);
  EXPECT_EQ(parse_config("  \n ").bus.neighbors, 20u);
}

TEST(Config, ReadsNestedSections) {
  const auto cfg = parse_config(R"({
    // comments are allowed
    "ssl": {"alpha": 0.8, "beta": 0.1, "t_max": 500},
    "loop": {"max_cycles": 4, "variants": {"disable_aus": true}, "target_accuracy": 0.9},
    "dataset": {"kind": "moons", "num_classes": 2, "class_counts": [30, 40], "split": {"train": 0.8, "val": 0.1, "test": 0.1}},
    "augment": {"strong": {"scale_range": [0.5, 1.5]}},
    "model": {"hidden": [16]},
    "output_dir": "out"
  })");
  EXPECT_EQ(cfg.ssl.alpha, 0.8);
  EXPECT_EQ(cfg.ssl.t_max, 500u);
  EXPECT_EQ(cfg.loop.max_cycles, 4u);
  EXPECT_TRUE(cfg.loop.variants.disable_aus);
  EXPECT_EQ(cfg.loop.variants.name(), "-AUS");
  EXPECT_EQ(cfg.loop.target_accuracy, std::optional<double>{0.9});
  EXPECT_EQ(cfg.dataset.kind, data::DatasetKind::moons);
  EXPECT_EQ(cfg.dataset.class_counts, (std::vector<std::size_t>{30, 40}));
  EXPECT_EQ(cfg.dataset.split.train, 0.8);
  EXPECT_EQ(cfg.augment.strong.scale_lo, 0.5);
  EXPECT_EQ(cfg.model.hidden, (std::vector<std::size_t>{16}));
  EXPECT_EQ(cfg.output_dir, "out");
}

TEST(Config, RangeViolationNamesKey) {
  EXPECT_EQ(error_key(R"({"ssl": {"alpha": 1.5}})"), "ssl.alpha");
  EXPECT_EQ(error_key(R"({"optimizer": {"momentum": 1.0}})"), "optimizer.momentum");
  EXPECT_EQ(error_key(R"({"loop": {"initial_fraction": 0}})"), "loop.initial_fraction");
  EXPECT_EQ(error_key(R"({"dataset": {"split": {"train": 0.5, "val": 0.1, "test": 0.1}}})"), "dataset.split");
  EXPECT_EQ(error_key(R"({"dataset": {"class_ratio": [1, 2]}})"), "dataset.class_ratio");
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_EQ(error_key(R"({"ssl": {"gamma": 1}})"), "ssl.gamma");
  EXPECT_EQ(error_key(R"({"extra": 1})"), "extra");
  EXPECT_EQ(error_key(R"({"loop": {"variants": {"disable_xyz": true}}})"), "loop.variants.disable_xyz");
}

TEST(Config, TypeErrorsAreRejected) {
  EXPECT_EQ(error_key(R"({"ssl": {"alpha": "high"}})"), "ssl.alpha");
  EXPECT_EQ(error_key(R"({"loop": {"max_cycles": -1}})"), "loop.max_cycles");
  EXPECT_EQ(error_key(R"({"loop": {"max_cycles": 2.5}})"), "loop.max_cycles");
  EXPECT_EQ(error_key(R"({"loop": {"cold_start": 1}})"), "loop.cold_start");
  EXPECT_EQ(error_key(R"({"ssl": 3})"), "ssl");
  EXPECT_EQ(error_key(R"({"dataset": {"kind": "spirals"}})"), "dataset.kind");
  EXPECT_EQ(error_key("{not json"), "<root>");
}

TEST(Config, ExclusiveVariantsAreRejected) {
  EXPECT_EQ(error_key(R"({"loop": {"variants": {"random_sampling": true, "disable_aus": true}}})"),
            "loop.variants.random_sampling");
  EXPECT_EQ(error_key(R"({"loop": {"variants": {"disable_aus": true, "disable_bus": true}}})"),
            "loop.variants.disable_bus");
  EXPECT_EQ(error_key(R"({"loop": {"variants": {"random_sampling": true, "disable_adaptive_threshold": true}}})"),
            "<accepted>");
}

TEST(Config, SerializeParseIsIdempotent) {
  const std::string text = R"({"ssl": {"alpha": 0.85}, "loop": {"seed": 12, "target_accuracy": 0.97},
                               "dataset": {"class_ratio": [6, 3, 1], "dim": 4}, "bus": {"neighbors": 7}})";
  const auto once = serialize_config(parse_config(text));
  const auto twice = serialize_config(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(serialize_config(parse_config("")), serialize_config(parse_config(serialize_config(parse_config("")))));
}

TEST(Config, VariantNames) {
  Variants v;
  EXPECT_EQ(v.name(), "full");
  v.disable_adaptive_threshold = true;
  EXPECT_EQ(v.name(), "-AS");
  v = Variants{};
  v.disable_bus = true;
  EXPECT_EQ(v.name(), "-BUS");
  v = Variants{};
  v.random_sampling = true;
  EXPECT_EQ(v.name(), "SSL+RS");
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "alssl_cfg.json";
  {
    std::ofstream(path) << R"({"loop": {"steps_per_cycle": 123}})";
  }
  EXPECT_EQ(load_config(path).loop.steps_per_cycle, 123u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config("/nonexistent/cfg.json"), ConfigError);
}
