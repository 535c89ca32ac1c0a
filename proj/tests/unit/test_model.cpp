#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/model.hpp"
#include "rwkvir/ops.hpp"

using namespace rwkvir;
using namespace rwkvir::model;
using rwkvir::testing::gradcheck;
using rwkvir::testing::probe_weights;
using rwkvir::testing::random_tensor;

namespace {

TensorD weighted_sum(const TensorD& y) {
  auto w = TensorD::from_data(y.shape(), probe_weights(y.numel()));
  return ops::sum(ops::mul(y, w));
}

ModelConfig small_cfg() {
  ModelConfig c = preset("toy");
  c.embed_channels = 16;
  return c;
}

std::vector<TensorD> leaves_of(GllbParams<double>& p) {
  NamedParams<double> named;
  collect_gllb(p, "b", named);
  std::vector<TensorD> out;
  for (auto& [_, t] : named) out.push_back(*t);
  return out;
}

/// Adds uniform noise from [lo, hi] to every parameter.
void perturb(NamedParams<double>& named, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& [_, t] : named)
    for (auto& v : t->mutable_data()) v += u(rng);
}

}  // namespace

TEST_CASE("q_shift moves each channel quarter from its neighbour") {
  // x[c, h, w] = 100 c + 10 h + w on a 3x3 grid, 4 channels.
  std::vector<double> data(36);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 3; ++w) data[(c * 3 + h) * 3 + w] = 100.0 * c + 10.0 * h + w;
  const auto x = TensorD::from_data({1, 4, 3, 3}, data);
  const auto mu = TensorD::from_data({1}, {0.0});
  const auto y = ops::q_shift(x, mu, 1);
  auto at = [&](std::size_t c, std::size_t h, std::size_t w) { return y[(c * 3 + h) * 3 + w]; };
  // centre pixel: x + x' where x' reads from up, down, left, right respectively
  CHECK(at(0, 1, 1) == 11.0 + 1.0);
  CHECK(at(1, 1, 1) == 111.0 + 121.0);
  CHECK(at(2, 1, 1) == 211.0 + 210.0);
  CHECK(at(3, 1, 1) == 311.0 + 312.0);
  // zero padding at the border
  CHECK(at(0, 0, 0) == 0.0);
  CHECK(at(3, 2, 2) == 322.0);
  // p = 0 leaves the input unchanged
  const auto z = ops::q_shift(x, TensorD::from_data({1}, {0.4}), 0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(z[i] == x[i]);
}

TEST_CASE("dc_shift maps zero to zero without biases and is local") {
  ModelConfig cfg = small_cfg();
  auto p = init_gllb<double>(cfg, 0, 5).spatial.dc;
  for (auto* b : {&p.pw1.bias, &p.dw_bias, &p.pw2.bias})
    for (auto& v : b->mutable_data()) v = 0;
  const auto zero = TensorD::zeros({1, 16, 5, 5});
  const auto y0 = dc_shift(zero, p);
  for (std::size_t i = 0; i < y0.numel(); ++i) CHECK(y0[i] == 0.0);

  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 16, 9, 9}, rng, -1, 1, false);
  const auto base = dc_shift(x, p);
  auto bumped = TensorD::from_data(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  for (std::size_t c = 0; c < 16; ++c) bumped.mutable_data()[(c * 9 + 4) * 9 + 4] += 1.0;
  const auto moved = dc_shift(bumped, p);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t h = 0; h < 9; ++h)
      for (std::size_t w = 0; w < 9; ++w) {
        const std::size_t i = (c * 9 + h) * 9 + w;
        const bool near = std::abs(int(h) - 4) <= 1 && std::abs(int(w) - 4) <= 1;
        if (!near) CHECK(moved[i] == base[i]);
      }
}

TEST_CASE("spatial mix with a zero receptance weight gates the WKV output by one half") {
  ModelConfig cfg = small_cfg();
  cfg.embed_channels = 4;
  cfg.shift = ShiftKind::none;
  auto p = init_gllb<double>(cfg, 0, 1).spatial;
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  p.w_r = TensorD::zeros({4, 4});
  p.w_k = TensorD::from_data({4, 4}, eye);
  p.w_v = TensorD::from_data({4, 4}, eye);
  p.w_o = TensorD::from_data({4, 4}, eye);
  std::mt19937_64 rng(4);
  const auto x = random_tensor({1, 4, 3, 5}, rng, -1, 1, false);
  const auto orders = block_scan_orders(WkvKind::cross, 0);
  const auto y = spatial_mix(x, p, cfg, orders);
  const auto h = wkv::biwkv_nchw(x, x, p.dirs[0].w, p.dirs[0].u, wkv::ScanOrder::horizontal);
  const auto v = wkv::biwkv_nchw(x, x, p.dirs[1].w, p.dirs[1].u, wkv::ScanOrder::vertical);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.25 * (h[i] + v[i])).epsilon(1e-14));

  cfg.cross_combine = wkv::CrossCombine::sum;
  const auto ys = spatial_mix(x, p, cfg, orders);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(ys[i] == doctest::Approx(0.5 * (h[i] + v[i])).epsilon(1e-14));
}

TEST_CASE("channel mix is pointwise and its gradients match finite differences") {
  ModelConfig cfg = small_cfg();
  cfg.embed_channels = 4;
  cfg.ffn = FfnKind::channel_mix;
  auto p = init_gllb<double>(cfg, 0, 3).ffn.cm;
  std::mt19937_64 rng(6);
  p.w_r = random_tensor({4, 4}, rng, -1, 1);
  p.w_k = random_tensor({8, 4}, rng, -1, 1);
  p.w_v = random_tensor({4, 8}, rng, -1, 1);
  auto x = random_tensor({1, 4, 2, 3}, rng, -1, 1);

  // swapping two pixels swaps the outputs
  std::vector<std::size_t> swap_idx(x.numel());
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t s = 0; s < 6; ++s) swap_idx[c * 6 + s] = c * 6 + (s == 0 ? 5 : s == 5 ? 0 : s);
  const auto xs = ops::gather(x, x.shape(), swap_idx);
  const auto a = channel_mix(x, p);
  const auto b = channel_mix(xs, p);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(b[i] == a[swap_idx[i]]);

  const auto r = gradcheck([&] { return weighted_sum(channel_mix(x, p)); }, {x, p.w_r, p.w_k, p.w_v});
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("FFN variants keep the shape") {
  std::mt19937_64 rng(9);
  const auto x = random_tensor({2, 16, 5, 6}, rng, -1, 1, false);
  for (auto kind : {FfnKind::channel_mix, FfnKind::mlp, FfnKind::cab}) {
    ModelConfig cfg = small_cfg();
    cfg.ffn = kind;
    const auto p = init_gllb<double>(cfg, 0, 7).ffn;
    CHECK(ffn_forward(x, p).shape() == x.shape());
  }
}

TEST_CASE("CAB output is spatially constant away from the border for a constant input") {
  ModelConfig cfg = small_cfg();
  cfg.ffn = FfnKind::cab;
  const auto p = init_gllb<double>(cfg, 0, 8).ffn;
  const auto x = TensorD::full({1, 16, 9, 9}, 0.3);
  const auto y = ffn_forward(x, p);
  for (std::size_t c = 0; c < 16; ++c) {
    const double ref = y[(c * 9 + 4) * 9 + 4];
    for (std::size_t h = 2; h < 7; ++h)
      for (std::size_t w = 2; w < 7; ++w) CHECK(y[(c * 9 + h) * 9 + w] == doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("GLLB with zero weights reduces to beta times the input") {
  ModelConfig cfg = small_cfg();
  for (auto pos : {DcPosition::replace_shift, DcPosition::before_sm, DcPosition::parallel,
                   DcPosition::between_sm_cm, DcPosition::behind_cm}) {
    cfg.dc_position = pos;
    if (pos != DcPosition::replace_shift) cfg.shift = ShiftKind::q_shift;
    auto p = init_gllb<double>(cfg, 0, 11);
    NamedParams<double> named;
    collect_gllb(p, "b", named);
    for (auto& [_, t] : named)
      for (auto& v : t->mutable_data()) v = 0;
    p.beta.mutable_data()[0] = 0.7;
    std::mt19937_64 rng(12);
    const auto x = random_tensor({1, 16, 4, 5}, rng, -1, 1, false);
    const auto y = gllb_forward(x, p, cfg, block_scan_orders(cfg.wkv, 0));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(0.7 * x[i]).epsilon(1e-14));
  }
}

TEST_CASE("GLLB gradients match finite differences") {
  struct Case {
    FfnKind ffn;
    ShiftKind shift;
    DcPosition pos;
  };
  const Case cases[] = {{FfnKind::channel_mix, ShiftKind::dc_shift, DcPosition::replace_shift},
                        {FfnKind::mlp, ShiftKind::q_shift, DcPosition::replace_shift},
                        {FfnKind::cab, ShiftKind::none, DcPosition::replace_shift},
                        {FfnKind::channel_mix, ShiftKind::q_shift, DcPosition::before_sm},
                        {FfnKind::channel_mix, ShiftKind::q_shift, DcPosition::parallel},
                        {FfnKind::channel_mix, ShiftKind::q_shift, DcPosition::between_sm_cm},
                        {FfnKind::channel_mix, ShiftKind::q_shift, DcPosition::behind_cm}};
  std::uint64_t seed = 20;
  for (const auto& c : cases) {
    ModelConfig cfg = small_cfg();
    cfg.ffn = c.ffn;
    cfg.shift = c.shift;
    cfg.dc_position = c.pos;
    auto p = init_gllb<double>(cfg, 0, seed);
    NamedParams<double> named;
    collect_gllb(p, "b", named);
    perturb(named, seed, -0.2, 0.2);
    std::mt19937_64 rng(seed++);
    auto x = random_tensor({1, 16, 4, 4}, rng, -1, 1);
    auto leaves = leaves_of(p);
    leaves.push_back(x);
    const auto orders = block_scan_orders(cfg.wkv, 0);
    const auto r = gradcheck([&] { return weighted_sum(gllb_forward(x, p, cfg, orders)); }, leaves, 1e-5, 12);
    INFO("ffn " << to_string(c.ffn) << ", shift " << to_string(c.shift) << ", position " << to_string(c.pos));
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("output shape follows the scale") {
  for (std::size_t s = 1; s <= 4; ++s) {
    ModelConfig cfg = small_cfg();
    cfg.blocks_per_layer = {1};
    cfg.scale = s;
    auto m = build_model<float>(cfg, 1);
    NoGradGuard ng;
    const auto y = m->forward(TensorF::full({2, 3, 5, 7}, 0.5f));
    CHECK(y.shape() == Shape{2, 3, 5 * s, 7 * s});
  }
  ModelConfig d = preset("denoise");
  d.embed_channels = 16;
  d.blocks_per_layer = {1};
  auto m = build_model<float>(d, 1);
  NoGradGuard ng;
  CHECK(m->forward(TensorF::full({1, 3, 6, 4}, 0.5f)).shape() == Shape{1, 3, 6, 4});
  CHECK_THROWS_AS(m->forward(TensorF::full({1, 4, 6, 4}, 0.5f)), DimensionError);
}

TEST_CASE("presets") {
  const auto classic = preset("classic-sr");
  CHECK(classic.embed_channels == 192);
  CHECK(classic.blocks_per_layer == std::vector<std::size_t>(6, 6));
  CHECK(classic.wkv == WkvKind::cross);
  CHECK(classic.patch_size == 64);
  const auto light = preset("light-sr");
  CHECK(light.embed_channels == 48);
  CHECK(light.blocks_per_layer == std::vector<std::size_t>(4, 6));
  CHECK(light.wkv == WkvKind::layer_cross);
  const auto dn = preset("denoise");
  CHECK(dn.task == Task::denoise);
  CHECK(dn.scale == 1);
  CHECK(dn.patch_size == 128);
  const auto toy = preset("toy");
  CHECK(toy.embed_channels == 16);
  CHECK(toy.blocks_per_layer == std::vector<std::size_t>{2, 2});
  CHECK(toy.shift == ShiftKind::dc_shift);
  CHECK(toy.dc_ks == 3);
  try {
    preset("huge");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : preset_names()) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("config validation and JSON round trip") {
  ModelConfig c = small_cfg();
  c.embed_channels = 24;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(build_model<float>(c, 0), ConfigError);
  c = small_cfg();
  c.scale = 5;
  c.dc_ks = 4;
  CHECK(c.violations().size() == 2);

  const ModelConfig a = preset("light-sr");
  CHECK(ModelConfig::from_json(a.to_json()).to_json() == a.to_json());
  CHECK(ModelConfig::from_json(R"({"scale": 3})").scale == 3);
  try {
    ModelConfig::from_json(R"({"channels": 3})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("embed_channels") != std::string::npos);
  }
  CHECK_THROWS_AS(ModelConfig::from_json(R"({"wkv": "diagonal"})"), ConfigError);
}

TEST_CASE("initialization is seeded") {
  auto a = build_model<float>(preset("toy"), 7);
  auto b = build_model<float>(preset("toy"), 7);
  auto c = build_model<float>(preset("toy"), 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a->parameters().size(); ++i) {
    const auto& pa = *a->parameters()[i].second;
    const auto& pb = *b->parameters()[i].second;
    const auto& pc = *c->parameters()[i].second;
    for (std::size_t j = 0; j < pa.numel(); ++j) {
      CHECK(pa[j] == pb[j]);
      any_diff = any_diff || pa[j] != pc[j];
    }
  }
  CHECK(any_diff);
}

TEST_CASE("toy parameter count and unique names") {
  auto m = build_model<float>(preset("toy"), 0);
  const std::size_t C = 16;
  const std::size_t block = 4 * C                             // two layer norms
                            + 2 * (C * C + C) + 9 * C + C     // dc shift
                            + 4 * C * C                       // R, K, V, O
                            + 2 * 2 * C                       // two scan directions
                            + 5 * C * C                       // channel mix
                            + 1;                              // beta
  const std::size_t conv3 = 9 * C * C + C;
  const std::size_t expected = 4 * block + (27 * C + C) + 2 * conv3 + conv3 + conv3 + (9 * C * 4 * C + 4 * C) +
                               (27 * C + 3);
  CHECK(m->parameter_count() == expected);
  CHECK(expected == 31991);
  std::set<std::string> names;
  for (const auto& [n, _] : m->parameters()) names.insert(n);
  CHECK(names.size() == m->parameters().size());
}

TEST_CASE("scan orders per block") {
  auto run = [](WkvKind kind) {
    ModelConfig cfg = small_cfg();
    cfg.wkv = kind;
    cfg.blocks_per_layer = {3, 2};
    auto m = build_model<float>(cfg, 0);
    m->set_scan_logging(true);
    NoGradGuard ng;
    m->forward(TensorF::full({1, 3, 4, 4}, 0.2f));
    return m->scan_log();
  };
  using wkv::ScanOrder;
  const auto lc = run(WkvKind::layer_cross);
  REQUIRE(lc.size() == 5);
  const ScanOrder expect[] = {ScanOrder::horizontal, ScanOrder::vertical, ScanOrder::horizontal,
                              ScanOrder::horizontal, ScanOrder::vertical};
  for (std::size_t i = 0; i < 5; ++i) CHECK(lc[i].order == expect[i]);
  CHECK(lc[3].layer == 1);
  CHECK(lc[3].block == 0);

  const auto cr = run(WkvKind::cross);
  REQUIRE(cr.size() == 10);
  for (std::size_t i = 0; i < 10; i += 2) {
    CHECK(cr[i].order == ScanOrder::horizontal);
    CHECK(cr[i + 1].order == ScanOrder::vertical);
    CHECK(cr[i].block == cr[i + 1].block);
  }
  const auto bh = run(WkvKind::bi_h);
  REQUIRE(bh.size() == 5);
  for (const auto& e : bh) CHECK(e.order == ScanOrder::horizontal);
}

TEST_CASE("full model gradients match finite differences") {
  ModelConfig cfg = preset("toy");
  cfg.blocks_per_layer = {1};
  auto m = build_model<double>(cfg, 3);
  perturb(m->parameters(), 5, -0.3, 0.3);
  std::mt19937_64 rng(30);
  auto x = random_tensor({1, 3, 8, 8}, rng, 0, 1);
  std::vector<TensorD> leaves;
  for (auto& [_, t] : m->parameters()) leaves.push_back(*t);
  leaves.push_back(x);
  const auto r = gradcheck([&] { return weighted_sum(m->forward(x)); }, leaves, 1e-5, 4);
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("toy forward pass on a 24x24 patch takes under a second") {
  auto m = build_model<float>(preset("toy"), 0);
  NoGradGuard ng;
  const auto t0 = std::chrono::steady_clock::now();
  const auto y = m->forward(TensorF::full({1, 3, 24, 24}, 0.5f));
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(y.shape() == Shape{1, 3, 48, 48});
  CHECK(s < 1.0);
}
