#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace alssl::png {

/// 8-bit grayscale PNG; `pixels` is row-major, width * height bytes.
std::string encode_gray(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height);

/// Renders intensities in [0, 1] (clamped) as a grayscale PNG.
std::string encode_intensity(std::span<const double> values, std::size_t width, std::size_t height);

/// Bar chart of a feature vector: one column band per feature, bar height
/// proportional to the value's distance from zero within [-limit, limit].
std::string encode_bars(std::span<const double> values, double limit);

}  // namespace alssl::png
