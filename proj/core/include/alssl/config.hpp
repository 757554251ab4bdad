#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "alssl/augment.hpp"
#include "alssl/dataset.hpp"
#include "alssl/nn.hpp"
#include "alssl/ssl.hpp"

namespace alssl {

struct AusSettings {
  double tau = 1.0;
  std::size_t power_iterations = 1;
  /// xi = xi_scale * sqrt(representation dim).
  double xi_scale = 1e-6;

  friend bool operator==(const AusSettings&, const AusSettings&) = default;
};

struct BusSettings {
  std::size_t neighbors = 20;

  friend bool operator==(const BusSettings&, const BusSettings&) = default;
};

struct AugmentSettings {
  augment::AugmentPolicy weak = augment::AugmentPolicy::weak_default();
  augment::AugmentPolicy strong = augment::AugmentPolicy::strong_default();
};

/// Ablation switches. random_sampling excludes the selector switches.
struct Variants {
  bool disable_adaptive_threshold = false;  // -AS
  bool disable_aus = false;                 // -AUS
  bool disable_bus = false;                 // -BUS
  bool random_sampling = false;             // SSL+RS

  std::string name() const;
  friend bool operator==(const Variants&, const Variants&) = default;
};

struct LoopConfig {
  /// All fractions are of the training split.
  double initial_fraction = 0.10;
  std::size_t max_cycles = 30;
  double selector_budget_fraction = 0.025;
  double annotation_budget_fraction = 0.20;
  std::size_t steps_per_cycle = 2000;
  std::size_t eval_interval = 200;
  /// Evaluation intervals without validation improvement before a phase ends.
  std::size_t patience = 3;
  std::optional<double> target_accuracy;
  Variants variants;
  bool cold_start = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::size_t oracle_retries = 2;
  bool export_representations = true;
};

struct RunConfig {
  nn::ModelConfig model;
  nn::OptimizerConfig optimizer;
  ssl::SslConfig ssl;
  AusSettings aus;
  BusSettings bus;
  AugmentSettings augment;
  LoopConfig loop;
  data::DatasetSpec dataset;
  std::string output_dir = "run";

  /// Throws ConfigError naming the first invalid key.
  void validate() const;
};

/// Parses a JSON document (comments allowed) with one object per section:
/// model, optimizer, ssl, aus, bus, augment, loop, dataset, plus output_dir.
/// Absent keys take defaults; unknown keys, type errors and range
/// violations throw ConfigError with the dotted key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Full, canonical serialisation (every key present).
std::string serialize_config(const RunConfig& cfg);

}  // namespace alssl
