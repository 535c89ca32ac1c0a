#include <cmath>
#include <random>

#include "doctest.h"
#include "rwkvir/error.hpp"
#include "rwkvir/glcm.hpp"
#include "rwkvir/image.hpp"

using namespace rwkvir;

namespace {

Image gray_image(std::size_t w, std::size_t h, const std::vector<double>& values) {
  Image img(w, h, 3);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.data[i * 3 + c] = values[i];
  return img;
}

Image stripes(std::size_t w, std::size_t h) {
  std::vector<double> v(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = x % 2 == 0 ? 0.0 : 255.0;
  return gray_image(w, h, v);
}

// Independent pair counter: visits every ordered pixel pair and checks the offset.
std::vector<double> brute_force_glcm(const GrayGrid& g, const GlcmConfig& cfg) {
  const std::size_t L = static_cast<std::size_t>(cfg.levels);
  std::vector<double> counts(L * L, 0.0);
  double total = 0;
  for (auto [dy, dx] : cfg.offsets) {
    for (std::size_t p = 0; p < g.width * g.height; ++p) {
      for (std::size_t q = 0; q < g.width * g.height; ++q) {
        const long py = static_cast<long>(p / g.width), px = static_cast<long>(p % g.width);
        const long qy = static_cast<long>(q / g.width), qx = static_cast<long>(q % g.width);
        if (qy - py != dy || qx - px != dx) continue;
        const auto a = static_cast<std::size_t>(g.bins[p]);
        const auto b = static_cast<std::size_t>(g.bins[q]);
        counts[a * L + b] += 1;
        total += 1;
        if (cfg.symmetric) {
          counts[b * L + a] += 1;
          total += 1;
        }
      }
    }
  }
  for (auto& c : counts) c /= total;
  return counts;
}

}  // namespace

TEST_CASE("quantize_gray uses BT.601 luma and floor binning") {
  Image img(4, 1, 3);
  const double px[4][3] = {{0, 0, 0}, {255, 255, 255}, {255, 0, 0}, {4, 4, 4}};
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t c = 0; c < 3; ++c) img.at(0, x, c) = px[x][c];
  const auto g = quantize_gray(img, 64);
  CHECK(g.bins[0] == 0);
  CHECK(g.bins[1] == 63);
  CHECK(g.bins[2] == 19);  // luma 76.245 -> 19.06
  CHECK(g.bins[3] == 1);
}

TEST_CASE("quantize_gray rejects empty images and bad level counts") {
  CHECK_THROWS_AS(quantize_gray(Image{}, 64), EmptyInputError);
  CHECK_THROWS_AS(quantize_gray(Image(2, 2, 3), 1), ConfigError);
}

TEST_CASE("constant image has complexity exactly -1") {
  for (double v : {0.0, 17.0, 128.0, 255.0}) {
    const Image img(9, 7, 3, v);
    CHECK(complexity(img) == -1.0);
  }
}

TEST_CASE("two-level stripes along the horizontal offset give 1.5") {
  GlcmConfig cfg;
  cfg.levels = 2;
  cfg.offsets = {{0, 1}};
  const Image img = stripes(8, 5);
  const auto P = glcm(quantize_gray(img, 2), cfg);
  CHECK(P == std::vector<double>{0.0, 0.5, 0.5, 0.0});
  const auto s = glcm_stats(P, 2);
  CHECK(s.ent == 1.0);
  CHECK(s.ene == 0.5);
  CHECK(s.diss == 1.0);
  CHECK(complexity(img, cfg) == 1.5);
}

TEST_CASE("two-level stripes pooled over both offsets give 2.25") {
  GlcmConfig cfg;
  cfg.levels = 2;
  const Image img = stripes(8, 8);
  // Horizontal pairs land off-diagonal, vertical pairs on the diagonal. With an
  // 8x8 grid both offsets contribute 56 pairs each, so every cell is 1/4.
  const auto P = glcm(quantize_gray(img, 2), cfg);
  for (double p : P) CHECK(p == 0.25);
  CHECK(complexity(img, cfg) == 2.25);
}

TEST_CASE("glcm matches brute-force pair counting on random grids") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    GlcmConfig cfg;
    cfg.levels = 2 + static_cast<int>(rng() % 7);
    cfg.symmetric = trial % 3 != 0;
    if (trial % 4 == 1) cfg.offsets = {{1, 1}, {-1, 2}};
    GrayGrid g{8, 8, cfg.levels, std::vector<int>(64)};
    for (auto& b : g.bins) b = static_cast<int>(rng() % static_cast<unsigned>(cfg.levels));
    const auto fast = glcm(g, cfg);
    const auto slow = brute_force_glcm(g, cfg);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-15));
  }
}

TEST_CASE("glcm is a normalized, symmetric distribution") {
  std::mt19937_64 rng(11);
  GrayGrid g{13, 6, 16, std::vector<int>(78)};
  for (auto& b : g.bins) b = static_cast<int>(rng() % 16);
  const auto P = glcm(g, GlcmConfig{16});
  double total = 0;
  for (double p : P) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) CHECK(P[i * 16 + j] == P[j * 16 + i]);
}

TEST_CASE("complexity is invariant under transpose with the default offsets") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 255);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t w = 7 + trial, h = 5 + 2 * trial;
    std::vector<double> v(w * h), vt(w * h);
    for (auto& x : v) x = u(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) vt[x * h + y] = v[y * w + x];
    CHECK(complexity(gray_image(w, h, v)) == doctest::Approx(complexity(gray_image(h, w, vt))).epsilon(1e-12));
  }
}

TEST_CASE("complexity is invariant under gray-level inversion") {
  // Inversion maps bin b to L-1-b when values sit at bin centres.
  std::mt19937_64 rng(8);
  const int L = 64;
  std::vector<double> v(100), inv(100);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int b = static_cast<int>(rng() % L);
    v[i] = b * 4 + 2;
    inv[i] = (L - 1 - b) * 4 + 2;
  }
  CHECK(complexity(gray_image(10, 10, v)) == doctest::Approx(complexity(gray_image(10, 10, inv))).epsilon(1e-12));
}

TEST_CASE("glcm_stats closed forms") {
  SUBCASE("uniform over L*L cells") {
    const int L = 4;
    std::vector<double> P(16, 1.0 / 16);
    const auto s = glcm_stats(P, L);
    CHECK(s.ent == doctest::Approx(4.0));
    CHECK(s.ene == doctest::Approx(1.0 / 16));
    // mean |i - j| over a 4x4 grid = (2 * (3*1 + 2*2 + 1*3)) / 16 = 1.25
    CHECK(s.diss == doctest::Approx(1.25));
  }
  SUBCASE("unnormalized input is rejected") {
    std::vector<double> P(4, 0.3);
    CHECK_THROWS_AS(glcm_stats(P, 2), ContractError);
  }
  SUBCASE("size mismatch is rejected") {
    std::vector<double> P(5, 0.2);
    CHECK_THROWS_AS(glcm_stats(P, 2), DimensionError);
  }
}

TEST_CASE("glcm with no valid pairs throws") {
  GrayGrid g{1, 1, 4, {2}};
  CHECK_THROWS_AS(glcm(g, GlcmConfig{4}), EmptyInputError);
}

TEST_CASE("bpp") {
  CHECK(bpp(100, 10, 10) == 8.0);
  CHECK(bpp(3, 4, 6) == 1.0);
  CHECK_THROWS_AS(bpp(10, 0, 5), EmptyInputError);
  const Image flat(32, 32, 3, 9.0);
  Image noisy(32, 32, 3);
  std::mt19937_64 rng(1);
  for (auto& x : noisy.data) x = static_cast<double>(rng() % 256);
  CHECK(png_bpp(flat) < png_bpp(noisy));
}
