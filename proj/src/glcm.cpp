#include "rwkvir/glcm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>

#include "rwkvir/error.hpp"

namespace rwkvir {

void GlcmConfig::validate() const {
  if (levels < 2) throw ConfigError("glcm: levels must be >= 2, got " + std::to_string(levels));
  if (offsets.empty()) throw ConfigError("glcm: at least one offset is required");
  for (auto [dy, dx] : offsets) {
    if (dy == 0 && dx == 0) throw ConfigError("glcm: offset (0,0) is not allowed");
  }
}

GrayGrid quantize_gray(const Image& img, int levels) {
  if (img.empty()) throw EmptyInputError("quantize_gray: image has no pixels");
  if (levels < 2) throw ConfigError("quantize_gray: levels must be >= 2");
  if (img.channels != 1 && img.channels != 3) throw DimensionError("quantize_gray: expected 1 or 3 channels");
  GrayGrid g{img.width, img.height, levels, std::vector<int>(img.pixels())};
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    const double* px = &img.data[i * img.channels];
    const double y = img.channels == 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] : px[0];
    const auto bin = static_cast<long>(std::floor(y * levels / 256.0 + 1e-9));
    g.bins[i] = static_cast<int>(std::clamp<long>(bin, 0, levels - 1));
  }
  return g;
}

std::vector<double> glcm(const GrayGrid& gray, const GlcmConfig& cfg) {
  cfg.validate();
  if (gray.levels > cfg.levels) throw ConfigError("glcm: grid was quantized with more levels than the config");
  const std::size_t L = static_cast<std::size_t>(cfg.levels);
  std::vector<std::uint64_t> counts(L * L, 0);
  std::uint64_t total = 0;
  const auto H = static_cast<long>(gray.height), W = static_cast<long>(gray.width);
  for (auto [dy, dx] : cfg.offsets) {
    const long y0 = std::max(0L, -static_cast<long>(dy)), y1 = std::min(H, H - dy);
    const long x0 = std::max(0L, -static_cast<long>(dx)), x1 = std::min(W, W - dx);
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) {
        const auto a = static_cast<std::size_t>(gray.bins[y * W + x]);
        const auto b = static_cast<std::size_t>(gray.bins[(y + dy) * W + (x + dx)]);
        ++counts[a * L + b];
        ++total;
        if (cfg.symmetric) {
          ++counts[b * L + a];
          ++total;
        }
      }
    }
  }
  if (total == 0) throw EmptyInputError("glcm: no valid pixel pairs for any offset");
  std::vector<double> P(L * L);
  for (std::size_t i = 0; i < P.size(); ++i) P[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return P;
}

GlcmStats glcm_stats(std::span<const double> P, int levels) {
  const auto L = static_cast<std::size_t>(levels);
  if (levels < 1 || P.size() != L * L) throw DimensionError("glcm_stats: matrix size does not match levels");
  double total = 0;
  for (double p : P) total += p;
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("glcm_stats: matrix is not normalized");
  GlcmStats s;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const double p = P[i * L + j];
      if (p <= 0) continue;
      s.ent -= p * std::log2(p);
      s.ene += p * p;
      s.diss += p * std::abs(static_cast<double>(i) - static_cast<double>(j));
    }
  }
  return s;
}

double complexity_from_stats(const GlcmStats& s) { return s.ent - s.ene + s.diss; }

GlcmStats image_glcm_stats(const Image& img, const GlcmConfig& cfg) {
  return glcm_stats(glcm(quantize_gray(img, cfg.levels), cfg), cfg.levels);
}

double complexity(const Image& img, const GlcmConfig& cfg) { return complexity_from_stats(image_glcm_stats(img, cfg)); }

double bpp(std::size_t encoded_bytes, std::size_t width, std::size_t height) {
  if (width * height == 0) throw EmptyInputError("bpp: image has no pixels");
  return static_cast<double>(encoded_bytes) * 8.0 / static_cast<double>(width * height);
}

double png_bpp(const Image& img) { return bpp(encode_png(img).size(), img.width, img.height); }

}  // namespace rwkvir
