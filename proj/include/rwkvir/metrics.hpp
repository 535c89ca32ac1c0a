#pragma once

// Full-reference image quality metrics on the 0..255 scale.

#include <cstddef>
#include <span>

#include "rwkvir/image.hpp"

namespace rwkvir {

struct MetricConfig {
  double max_val = 255.0;
  std::size_t border_crop = 0;
  bool y_channel = false;
};

/// SR convention: crop `scale` pixels per border, score luma.
MetricConfig sr_metric_config(std::size_t scale);
/// Denoising convention: RGB, no crop.
MetricConfig denoise_metric_config();

/// Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255.
Image rgb_to_y(const Image& img);

/// 10 log10(max^2 / MSE). Returns +infinity when MSE == 0.
double psnr(const Image& ref, const Image& test, const MetricConfig& cfg = {});

/// Mean SSIM over all 'valid' 11x11 Gaussian windows (sigma 1.5); for
/// multi-channel input the per-channel means are averaged.
double ssim(const Image& ref, const Image& test, const MetricConfig& cfg = {});

/// Sample Pearson correlation coefficient.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace rwkvir
