#pragma once

// Interleaved (HWC) images with values on the 0..255 scale, stored as double
// so degraded images (noise, resampling) can be kept unquantized.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace rwkvir {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
      : width(w), height(h), channels(c), data(w * h * c, fill) {}

  std::size_t pixels() const { return width * height; }
  bool empty() const { return width == 0 || height == 0; }
  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
};

/// Rounds to the nearest integer and clamps into [0, 255].
Image quantize_u8(const Image& img);

/// Decodes any PNG to 8-bit RGB. Throws IoError on failure.
Image read_png(const std::filesystem::path& path);
Image decode_png(const std::vector<std::uint8_t>& bytes);
/// Writes an 8-bit RGB (or gray, for 1 channel) PNG after quantize_u8.
void write_png(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

/// Lossless float container for unquantized images:
/// "RWFI" magic, u32 width, u32 height, u32 channels, then f32 values (all little-endian).
void write_float_image(const std::filesystem::path& path, const Image& img);
Image read_float_image(const std::filesystem::path& path);

/// Crops [y0, y0+h) x [x0, x0+w).
Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

}  // namespace rwkvir
