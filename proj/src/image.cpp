#include "rwkvir/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rwkvir/error.hpp"

namespace rwkvir {

namespace {

Image from_rgb8(const std::vector<std::uint8_t>& buf, std::size_t w, std::size_t h) {
  Image img(w, h, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  return img;
}

Image finish_read(png_image& pi, const std::string& what) {
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw IoError("cannot decode PNG " + what + ": " + msg);
  }
  return from_rgb8(buf, pi.width, pi.height);
}

std::vector<std::uint8_t> to_u8_buffer(const Image& img) {
  std::vector<std::uint8_t> out(img.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(img.data[i]), 0.0, 255.0));
  }
  return out;
}

png_image writer_for(const Image& img) {
  if (img.empty() || (img.channels != 1 && img.channels != 3)) {
    throw DimensionError("PNG output needs a non-empty 1- or 3-channel image");
  }
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return pi;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated float image header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

Image quantize_u8(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = std::clamp(std::nearbyint(v), 0.0, 255.0);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw IoError("cannot read PNG " + path.string() + ": " + msg);
  }
  return finish_read(pi, path.string());
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw IoError("cannot decode PNG buffer: " + msg);
  }
  return finish_read(pi, "buffer");
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image pi = writer_for(img);
  const auto buf = to_u8_buffer(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG size query failed: ") + pi.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + pi.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

void write_float_image(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("RWFI", 4);
  put_u32(os, static_cast<std::uint32_t>(img.width));
  put_u32(os, static_cast<std::uint32_t>(img.height));
  put_u32(os, static_cast<std::uint32_t>(img.channels));
  static_assert(std::endian::native == std::endian::little, "float sidecar assumes a little-endian host");
  std::vector<float> vals(img.data.begin(), img.data.end());
  os.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path.string());
}

Image read_float_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RWFI", 4) != 0) throw IoError("not a float image: " + path.string());
  const std::size_t w = get_u32(is), h = get_u32(is), c = get_u32(is);
  std::vector<float> vals(w * h * c);
  if (!is.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(float)))) {
    throw IoError("truncated float image: " + path.string());
  }
  Image img(w, h, c);
  std::copy(vals.begin(), vals.end(), img.data.begin());
  return img;
}

Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > img.height || x0 + w > img.width) throw DimensionError("crop window exceeds image bounds");
  Image out(w, h, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = &img.data[((y0 + y) * img.width + x0) * img.channels];
    std::copy(src, src + w * img.channels, &out.data[y * w * img.channels]);
  }
  return out;
}

}  // namespace rwkvir
