#include "alssl/png.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <zlib.h>

#include "alssl/errors.hpp"

namespace alssl::png {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

void chunk(std::string& out, const char* type, const std::string& body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  std::string tagged(type, 4);
  tagged += body;
  out += tagged;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(tagged.data()), static_cast<uInt>(tagged.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_gray(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || pixels.size() != width * height) throw InvalidInput("pixel buffer does not match size");
  std::string raw;
  raw.reserve((width + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data() + y * width), width);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK)
    throw Error("png compression failed");
  packed.resize(packed_size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, grayscale, deflate, no filter, no interlace
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", "");
  return out;
}

std::string encode_intensity(std::span<const double> values, std::size_t width, std::size_t height) {
  std::vector<std::uint8_t> px(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::clamp(values[i], 0.0, 1.0) : 0.0;
    px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return encode_gray(px, width, height);
}

std::string encode_bars(std::span<const double> values, double limit) {
  if (values.empty()) throw InvalidInput("nothing to draw");
  if (!(limit > 0.0)) limit = 1.0;
  constexpr std::size_t band = 8;
  constexpr std::size_t height = 64;
  const std::size_t width = band * values.size();
  std::vector<std::uint8_t> px(width * height, 255);
  const std::size_t mid = height / 2;
  for (std::size_t f = 0; f < values.size(); ++f) {
    const double v = std::isfinite(values[f]) ? std::clamp(values[f] / limit, -1.0, 1.0) : 0.0;
    const auto len = static_cast<std::size_t>(std::lround(std::abs(v) * static_cast<double>(mid - 1)));
    for (std::size_t k = 0; k <= len; ++k) {
      const std::size_t y = v >= 0 ? mid - k : mid + k;
      for (std::size_t x = f * band + 1; x + 1 < (f + 1) * band; ++x) px[y * width + x] = 40;
    }
  }
  for (std::size_t x = 0; x < width; ++x) px[mid * width + x] = 128;
  return encode_gray(px, width, height);
}

}  // namespace alssl::png
