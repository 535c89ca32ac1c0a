#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "rwkvir/error.hpp"
#include "rwkvir/metrics.hpp"

using namespace rwkvir;

namespace {

Image random_image(std::size_t w, std::size_t h, std::size_t c, std::uint64_t seed) {
  Image img(w, h, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 255);
  for (auto& v : img.data) v = std::round(u(rng));
  return img;
}

// Direct SSIM: each 11x11 window evaluated independently with explicit weights.
double ssim_reference(const Image& a, const Image& b) {
  double g[11], total = 0;
  for (int i = 0; i < 11; ++i) total += g[i] = std::exp(-(i - 5) * (i - 5) / 4.5);
  const double c1 = 6.5025, c2 = 58.5225;
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y) {
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double w = g[i] * g[j] / (total * total);
          const double pa = a.at(y + i, x + j, 0), pb = b.at(y + i, x + j, 0);
          ma += w * pa;
          mb += w * pb;
          saa += w * pa * pa;
          sbb += w * pb * pb;
          sab += w * pa * pb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace

TEST_CASE("PSNR of a +1 offset is 20 log10(255)") {
  Image a = random_image(20, 12, 3, 1);
  for (auto& v : a.data) v = std::min(v, 254.0);
  Image b = a;
  for (auto& v : b.data) v += 1.0;
  CHECK(psnr(a, b) == doctest::Approx(48.1308).epsilon(1e-3 / 48.1308));
  CHECK(std::abs(psnr(a, b) - 20 * std::log10(255.0)) < 1e-12);
}

TEST_CASE("PSNR of identical images is +inf") {
  const Image a = random_image(16, 16, 3, 2);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
}

TEST_CASE("PSNR and SSIM reject mismatched images") {
  CHECK_THROWS_AS(psnr(Image(4, 4, 3), Image(5, 4, 3)), DimensionError);
  CHECK_THROWS_AS(ssim(Image(20, 20, 3), Image(20, 20, 1)), DimensionError);
  CHECK_THROWS_AS(ssim(Image(10, 20, 1), Image(10, 20, 1)), DimensionError);
}

TEST_CASE("Y channel conversion endpoints") {
  Image img(3, 1, 3);
  for (std::size_t c = 0; c < 3; ++c) img.at(0, 1, c) = 255;
  img.at(0, 2, 0) = 255;
  const Image y = rgb_to_y(img);
  CHECK(y.data[0] == doctest::Approx(16.0));
  CHECK(y.data[1] == doctest::Approx(235.0));
  CHECK(y.data[2] == doctest::Approx(81.481));
}

TEST_CASE("SR metric config crops the border and uses Y") {
  const auto cfg = sr_metric_config(3);
  CHECK(cfg.border_crop == 3);
  CHECK(cfg.y_channel);
  Image a = random_image(20, 20, 3, 4);
  Image b = a;
  b.at(0, 0, 0) = 255 - b.at(0, 0, 0);  // only inside the cropped border
  CHECK(psnr(a, b, cfg) == std::numeric_limits<double>::infinity());
  CHECK(std::isfinite(psnr(a, b, denoise_metric_config())));
}

TEST_CASE("SSIM of an image with itself is 1") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = random_image(24, 17, 3, s);
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  }
}

TEST_CASE("SSIM drops for an inverted image") {
  const Image a = random_image(32, 32, 1, 9);
  Image inv = a;
  for (auto& v : inv.data) v = 255 - v;
  CHECK(ssim(a, inv) < 0.0);
}

TEST_CASE("SSIM matches a direct windowed computation") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image a = random_image(16, 16, 1, 10 + s);
    Image b = a;
    std::mt19937_64 rng(s);
    std::normal_distribution<double> n(0, 20);
    for (auto& v : b.data) v = std::clamp(v + n(rng), 0.0, 255.0);
    CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  std::vector<double> up, down;
  for (double v : x) {
    up.push_back(3 * v - 7);
    down.push_back(-0.5 * v + 2);
  }
  CHECK(std::abs(pearson(x, up) - 1.0) < 1e-12);
  CHECK(std::abs(pearson(x, down) + 1.0) < 1e-12);
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(pearson(a, b) == doctest::Approx(0.8));
  CHECK_THROWS_AS(pearson(a, std::vector<double>{5, 5, 5, 5}), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), ContractError);
  CHECK_THROWS_AS(pearson(a, x), DimensionError);
}
