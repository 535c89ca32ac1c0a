#pragma once

// Gray-level co-occurrence statistics and the texture complexity score
//   complexity = ENT - ENE + DISS
// computed from a normalized GLCM pooled over a set of pixel offsets.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rwkvir/image.hpp"

namespace rwkvir {

struct GlcmConfig {
  int levels = 64;
  /// (dy, dx) displacements; counts are pooled over all of them.
  std::vector<std::pair<int, int>> offsets{{0, 1}, {1, 0}};
  bool symmetric = true;

  /// Throws ConfigError for levels < 2, an empty offset list or a (0,0) offset.
  void validate() const;
};

struct GrayGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  int levels = 0;
  std::vector<int> bins;  // row-major

  int at(std::size_t y, std::size_t x) const { return bins[y * width + x]; }
};

struct GlcmStats {
  double ent = 0;   // bits
  double ene = 0;
  double diss = 0;
};

struct ComplexityReport {
  double ent = 0;
  double ene = 0;
  double diss = 0;
  double complexity = 0;
  double bpp = 0;
  double blur_score = 0;
  double flat_fraction = 0;
};

/// BT.601 luma 0.299R + 0.587G + 0.114B, then bin = floor(Y * levels / 256).
/// Single-channel images are used as luma directly.
GrayGrid quantize_gray(const Image& img, int levels);

/// Normalized levels x levels matrix, row-major: P[i * levels + j].
std::vector<double> glcm(const GrayGrid& gray, const GlcmConfig& cfg);

GlcmStats glcm_stats(std::span<const double> P, int levels);

double complexity_from_stats(const GlcmStats& s);
double complexity(const Image& img, const GlcmConfig& cfg = {});
GlcmStats image_glcm_stats(const Image& img, const GlcmConfig& cfg = {});

/// encoded_bytes * 8 / (width * height).
double bpp(std::size_t encoded_bytes, std::size_t width, std::size_t height);
/// Bits per pixel of the image's PNG encoding.
double png_bpp(const Image& img);

}  // namespace rwkvir
