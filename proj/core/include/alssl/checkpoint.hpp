#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "alssl/nn.hpp"

namespace alssl {

/// Binary model container, little-endian:
///   "BMIS" | u32 version | u32 layer count
///   per layer: u64 rows, u64 cols, rows*cols f64 weights (row-major), rows f64 biases
///   per layer: momentum weights (row-major), momentum biases
///   u64 init seed
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const nn::TaskModel& model);
nn::TaskModel read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const nn::TaskModel& model);
nn::TaskModel load_checkpoint(const std::filesystem::path& path);

}  // namespace alssl
