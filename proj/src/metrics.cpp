#include "rwkvir/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "rwkvir/error.hpp"

namespace rwkvir {

namespace {

constexpr int kWin = 11;

void check_pair(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DimensionError("metric: images differ in size or channel count");
  }
  if (a.empty()) throw EmptyInputError("metric: empty image");
}

/// Applies the crop and luma conversion requested by the config.
Image prepare(const Image& img, const MetricConfig& cfg) {
  const std::size_t c = cfg.border_crop;
  if (img.width <= 2 * c || img.height <= 2 * c) throw DimensionError("metric: border crop leaves no pixels");
  Image out = crop(img, c, c, img.height - 2 * c, img.width - 2 * c);
  return cfg.y_channel ? rgb_to_y(out) : out;
}

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double total = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

/// 'valid' separable Gaussian filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                 const std::array<double, kWin>& g) {
  const std::size_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(oh * w), out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += g[i] * src[(y + i) * w + x];
      tmp[y * w + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += g[i] * tmp[y * w + x + i];
      out[y * ow + x] = s;
    }
  return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t w, std::size_t h,
                  double max_val) {
  const auto g = gaussian_window();
  const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, w, h, g), mu_b = filter_valid(b, w, h, g);
  const auto s_aa = filter_valid(aa, w, h, g), s_bb = filter_valid(bb, w, h, g), s_ab = filter_valid(ab, w, h, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

MetricConfig sr_metric_config(std::size_t scale) { return {255.0, scale, true}; }
MetricConfig denoise_metric_config() { return {255.0, 0, false}; }

Image rgb_to_y(const Image& img) {
  if (img.channels != 3) throw DimensionError("rgb_to_y: expected a 3-channel image");
  Image y(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    const double* p = &img.data[i * 3];
    y.data[i] = 16.0 + (65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0;
  }
  return y;
}

double psnr(const Image& ref, const Image& test, const MetricConfig& cfg) {
  check_pair(ref, test);
  if (cfg.max_val <= 0) throw ConfigError("psnr: max_val must be positive");
  const Image a = prepare(ref, cfg), b = prepare(test, cfg);
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(cfg.max_val * cfg.max_val / mse);
}

double ssim(const Image& ref, const Image& test, const MetricConfig& cfg) {
  check_pair(ref, test);
  if (cfg.max_val <= 0) throw ConfigError("ssim: max_val must be positive");
  const Image a = prepare(ref, cfg), b = prepare(test, cfg);
  if (a.width < kWin || a.height < kWin) throw DimensionError("ssim: image smaller than the 11x11 window");
  double total = 0;
  std::vector<double> pa(a.pixels()), pb(a.pixels());
  for (std::size_t c = 0; c < a.channels; ++c) {
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      pa[i] = a.data[i * a.channels + c];
      pb[i] = b.data[i * b.channels + c];
    }
    total += ssim_plane(pa, pb, a.width, a.height, cfg.max_val);
  }
  return total / static_cast<double>(a.channels);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("pearson: series differ in length");
  if (xs.size() < 2) throw ContractError("pearson: need at least two samples");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) throw UndefinedCorrelationError("pearson: a series has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace rwkvir
