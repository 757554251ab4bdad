#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "alssl/augment.hpp"
#include "alssl/nn.hpp"

namespace alssl::data {

/// Rows of `features` are samples; `ids[i]` is the stable id of row i and the
/// join key across reports and score dumps.
struct Dataset {
  std::vector<std::uint64_t> ids;
  Matrix features;
  std::vector<std::optional<std::size_t>> labels;
  std::size_t num_classes = 0;
  std::optional<augment::ImageShape> image_shape;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
  bool fully_labeled() const noexcept;
  /// Label of row i; throws InvalidInput for an unlabeled row.
  std::size_t label(std::size_t row) const;
  std::vector<std::size_t> label_vector() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

enum class DatasetKind { gaussians, moons, rings, idx_images, csv_features };

const char* to_string(DatasetKind kind);
std::optional<DatasetKind> parse_kind(const std::string& text);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussians;
  std::size_t num_classes = 3;
  /// Explicit per-class counts; when empty, `total` is apportioned by
  /// `class_ratio` (equal shares when that is empty too).
  std::vector<std::size_t> class_counts;
  std::vector<double> class_ratio;
  std::size_t total = 3000;
  std::size_t dim = 2;
  double noise = 1.0;
  std::uint64_t seed = 0;
  SplitFractions split;
  /// File inputs (csv-features, idx-images).
  std::string path;
  std::string labels_path;

  /// Two classes, 8.7 : 1.
  static DatasetSpec imbalanced(std::size_t total, std::uint64_t seed = 0);

  std::vector<std::size_t> resolved_counts() const;
  void validate() const;
};

/// Largest-remainder apportionment of `total` by `weights`; ties in the
/// fractional part go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights);

/// gaussians: class means on a radius-3 circle in the first two dimensions,
/// isotropic noise in all dims. moons / rings: the classic 2-D shapes with
/// noise; extra dimensions carry noise only. Rows are shuffled; ids = row index.
Dataset gen_synthetic(const DatasetSpec& spec);

/// Header row required; last column is the integer label or empty. When
/// `num_classes` is given, labels must be below it; otherwise it is inferred.
Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes = std::nullopt);
Dataset parse_csv(const std::string& text, std::optional<std::size_t> num_classes = std::nullopt);
std::string to_csv(const Dataset& dataset);
void save_csv(const std::filesystem::path& path, const Dataset& dataset);

/// IDX images (magic 0x00000803, u8 pixels scaled to [0, 1]) with optional
/// IDX labels (magic 0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 std::optional<std::size_t> num_classes = std::nullopt);
void save_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& dataset);

/// Dispatches on spec.kind: generates synthetic kinds, loads file kinds.
Dataset load_dataset(const DatasetSpec& spec);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Stratified, seeded split. Each class is shuffled and cut by
/// largest-remainder counts (ties rotate by class index), so per-class
/// proportions hold within one sample. Throws DataError when a class would
/// be absent from a split with a nonzero fraction.
Splits split(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace alssl::data
