#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace anuw {

/// Decoded PNG with interleaved samples. Bit depth is 8 or 16; palette and
/// sub-byte grayscale images are expanded to 8-bit on load.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
  unsigned bit_depth = 8;
  std::vector<std::uint16_t> samples;

  std::uint16_t at(std::size_t row, std::size_t col, std::size_t ch) const {
    return samples[(row * width + col) * channels + ch];
  }
};

/// Throws DataError on unreadable or malformed files.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace anuw
