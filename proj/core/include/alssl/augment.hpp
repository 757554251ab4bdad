#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "alssl/nn.hpp"

namespace alssl::augment {

enum class PolicyKind { weak, strong };

/// Grayscale raster layout of a flattened feature row (row-major, height x width).
struct ImageShape {
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t pixels() const noexcept { return width * height; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct AugmentPolicy {
  PolicyKind kind = PolicyKind::weak;
  /// Gaussian jitter for feature vectors, in units of `feature_scale`
  /// (per-feature std of the training set; empty means 1) and of pixel
  /// intensity for the image noise op.
  double jitter_sigma = 0.05;
  double shift_fraction = 0.125;
  double flip_probability = 0.5;
  double drop_probability = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> feature_scale;

  static AugmentPolicy weak_default();
  static AugmentPolicy strong_default();

  void validate() const;
};

/// Throws InvalidInput unless `weak` is at least as gentle as `strong`.
void validate_pair(const AugmentPolicy& weak, const AugmentPolicy& strong);

/// Everything that addresses one augmentation draw.
struct AugmentKey {
  std::uint64_t sample_id = 0;
  std::uint64_t cycle = 0;
  std::uint64_t step = 0;
  std::uint64_t draw = 0;
};

/// Image inputs (shape given): weak = horizontal flip + integer shift with
/// zero fill; strong = weak followed by two distinct ops from {brightness,
/// contrast, coarse dropout, additive noise}.
/// Feature vectors: weak = Gaussian jitter; strong = global scale, per-feature
/// dropout, then jitter.
Vector augment(std::span<const double> sample, const AugmentPolicy& policy, const AugmentKey& key,
               const std::optional<ImageShape>& shape = std::nullopt);

/// Per-feature standard deviation (population) of the rows of `features`.
std::vector<double> feature_std(const Matrix& features);

}  // namespace alssl::augment
