#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rwkvir/curation.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/glcm.hpp"

using namespace rwkvir;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rwkvir_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageRecord rec(const std::string& path, double complexity, const std::string& tag = "") {
  ImageRecord r;
  r.path = path;
  r.width = r.height = 1000;
  r.source_tag = tag;
  r.report.complexity = complexity;
  return r;
}

Image ramp_x(std::size_t w, std::size_t h) {
  Image img(w, h, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(y, x, 0) = static_cast<double>(x);
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

CurateConfig permissive() {
  CurateConfig c;
  c.min_side = 16;
  c.blur_min = 0;
  c.flat_max = 1;
  c.threshold_mode = "median";
  c.scales = {2};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("scan_dir on an empty directory yields nothing") {
  TempDir d("scan_empty");
  const auto res = scan_dir(d.path);
  CHECK(res.records.empty());
  CHECK(res.skipped.empty());
  CHECK_THROWS_AS(scan_dir(d.path / "missing"), IoError);
}

TEST_CASE("scan_dir reports decodable PNGs sorted and lists undecodable ones") {
  TempDir d("scan_three");
  fs::create_directories(d.path / "srcB");
  write_png(d.path / "b.png", Image(20, 10, 3, 40.0));
  write_png(d.path / "a.png", Image(8, 8, 3, 200.0));
  write_png(d.path / "srcB" / "c.png", synth_corpus(1, 3, 16)[2]);
  std::ofstream(d.path / "broken.png") << "not a png";
  std::ofstream(d.path / "notes.txt") << "ignored";
  const auto res = scan_dir(d.path);
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[0].path == "a.png");
  CHECK(res.records[1].path == "b.png");
  CHECK(res.records[2].path == "srcB/c.png");
  CHECK(res.records[2].source_tag == "srcB");
  CHECK(res.records[0].source_tag.empty());
  CHECK(res.records[1].width == 20);
  CHECK(res.records[1].height == 10);
  CHECK(res.records[0].report.complexity == -1.0);
  CHECK(res.skipped == std::vector<std::string>{"broken.png"});
}

TEST_CASE("resolution gate keeps images whose short side reaches the minimum") {
  std::vector<ImageRecord> rs{rec("a", 0), rec("b", 0), rec("c", 0)};
  rs[0].width = 800;
  rs[0].height = 1200;
  rs[1].width = 1200;
  rs[1].height = 799;
  rs[2].width = rs[2].height = 800;
  const auto kept = gate_resolution(rs, 800);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].path == "a");
  CHECK(kept[1].path == "c");
}

TEST_CASE("quality gate uses blur minimum and flat maximum inclusively") {
  std::vector<ImageRecord> rs{rec("a", 0), rec("b", 0), rec("c", 0)};
  rs[0].report.blur_score = 100;
  rs[0].report.flat_fraction = 0.6;
  rs[1].report.blur_score = 99.9;
  rs[1].report.flat_fraction = 0.1;
  rs[2].report.blur_score = 500;
  rs[2].report.flat_fraction = 0.61;
  const auto kept = gate_quality(rs, 100, 0.6);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].path == "a");
}

TEST_CASE("blur score is the variance of the interior Laplacian") {
  CHECK(blur_score(Image(6, 5, 3, 77.0)) == 0.0);
  Image checker(4, 4, 1);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) checker.at(y, x, 0) = (x + y) % 2 ? 255.0 : 0.0;
  // interior Laplacians: +1020, -1020, -1020, +1020
  CHECK(blur_score(checker) == doctest::Approx(1020.0 * 1020.0));
  CHECK_THROWS_AS(blur_score(Image(2, 5, 3)), DimensionError);
}

TEST_CASE("flat fraction counts interior pixels with small Sobel magnitude") {
  CHECK(flat_fraction(Image(5, 5, 3, 10.0), 20) == 1.0);
  Image step(6, 4, 1);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 3; x < 6; ++x) step.at(y, x, 0) = 100.0;
  // Interior columns 1..4: columns 2 and 3 see the step (|gx| = 400), 1 and 4 do not.
  CHECK(flat_fraction(step, 20) == 0.5);
}

TEST_CASE("balanced selection takes equal counts from each side") {
  const std::vector<ImageRecord> rs{rec("a", -2), rec("b", -1), rec("c", 1), rec("d", 2)};
  SUBCASE("n = 2") {
    const auto sel = balance_select(rs, 2, 0.0, 1, false);
    REQUIRE(sel.size() == 2);
    int below = 0;
    for (const auto& r : sel) below += r.report.complexity < 0;
    CHECK(below == 1);
  }
  SUBCASE("n = 4 takes everything") { CHECK(balance_select(rs, 4, 0.0, 1, false).size() == 4); }
  SUBCASE("threshold ties count as above") {
    const auto sel = balance_select(rs, 2, 1.0, 5, false);
    CHECK(std::count_if(sel.begin(), sel.end(), [](const ImageRecord& r) { return r.report.complexity >= 1; }) == 1);
  }
  SUBCASE("infeasible count reports both sides") {
    try {
      balance_select(rs, 6, 0.0, 1, false);
      FAIL("expected InfeasibleSelectionError");
    } catch (const InfeasibleSelectionError& e) {
      CHECK(e.below() == 2);
      CHECK(e.above() == 2);
    }
  }
  SUBCASE("odd n is rejected") { CHECK_THROWS_AS(balance_select(rs, 3, 0.0, 1, false), ContractError); }
  SUBCASE("selection is deterministic per seed") {
    std::vector<ImageRecord> many;
    for (int i = 0; i < 40; ++i) many.push_back(rec("r" + std::to_string(100 + i), i - 20.0));
    const auto a = balance_select(many, 10, 0.0, 9, false);
    const auto b = balance_select(many, 10, 0.0, 9, false);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].path == b[i].path);
  }
}

TEST_CASE("per-source balancing draws equally from every source") {
  std::vector<ImageRecord> rs;
  for (int i = 0; i < 6; ++i) {
    rs.push_back(rec("s1/" + std::to_string(i), i - 3.0, "s1"));
    rs.push_back(rec("s2/" + std::to_string(i), i - 3.0, "s2"));
  }
  const auto sel = balance_select(rs, 8, 0.0, 2, true);
  REQUIRE(sel.size() == 8);
  CHECK(std::count_if(sel.begin(), sel.end(), [](const ImageRecord& r) { return r.source_tag == "s1"; }) == 4);
  CHECK_THROWS_AS(balance_select(rs, 6, 0.0, 2, true), ContractError);
}

TEST_CASE("partition sizes use largest remainders and keep every part non-empty") {
  CHECK(partition_sizes(12, {10, 1, 1}) == std::vector<std::size_t>{10, 1, 1});
  CHECK(partition_sizes(3, {10, 1, 1}) == std::vector<std::size_t>{1, 1, 1});
  CHECK(partition_sizes(64, {6, 1, 1}) == std::vector<std::size_t>{48, 8, 8});
  CHECK(partition_sizes(24, {10, 1, 1}) == std::vector<std::size_t>{20, 2, 2});
  CHECK_THROWS_AS(partition_sizes(2, {10, 1, 1}), ContractError);
  CHECK_THROWS_AS(partition_sizes(10, {1, 0, 1}), ConfigError);
}

TEST_CASE("partition is a deterministic disjoint cover") {
  std::vector<ImageRecord> rs;
  for (int i = 0; i < 12; ++i) rs.push_back(rec("img" + std::to_string(10 + i), 0));
  const auto p = partition(rs, {10, 1, 1}, 4);
  CHECK(p.train.size() == 10);
  CHECK(p.val.size() == 1);
  CHECK(p.test.size() == 1);
  std::set<std::string> all(p.train.begin(), p.train.end());
  all.insert(p.val.begin(), p.val.end());
  all.insert(p.test.begin(), p.test.end());
  CHECK(all.size() == 12);
  const auto q = partition(rs, {10, 1, 1}, 4);
  CHECK(p.val == q.val);
  CHECK(p.test == q.test);
  std::set<std::string> tests;
  for (std::uint64_t s = 0; s < 20; ++s) tests.insert(partition(rs, {10, 1, 1}, s).test[0]);
  CHECK(tests.size() > 1);
}

TEST_CASE("bicubic taps are normalized") {
  for (auto [in, out, scale] : {std::tuple{10, 20, 2.0}, {30, 10, 1.0 / 3}, {9, 36, 4.0}, {12, 6, 0.5}}) {
    const auto t = bicubic_taps(in, out, scale);
    for (int i = 0; i < out; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < t.taps; ++j) total += t.weight[i * t.taps + j];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("bicubic resize preserves constants and sizes") {
  const Image c(13, 7, 3, 91.0);
  for (auto [num, den] : {std::pair{2, 1}, {3, 1}, {1, 2}, {1, 3}, {4, 1}}) {
    const Image r = bicubic_resize(c, num, den);
    CHECK(r.width == (13 * num + den - 1) / den);
    CHECK(r.height == (7 * num + den - 1) / den);
    for (double v : r.data) CHECK(v == doctest::Approx(91.0).epsilon(1e-12));
  }
  CHECK(bicubic_resize(c, 1, 1).data == c.data);
}

TEST_CASE("bicubic reproduces a linear ramp away from the borders") {
  // The Keys cubic reproduces linear functions, so interior samples equal the
  // ramp evaluated at the mapped source coordinate.
  const Image r = ramp_x(32, 4);
  const Image up = bicubic_resize(r, 2, 1);
  for (std::size_t x = 4; x + 4 < up.width; ++x) {
    const double u = (static_cast<double>(x) + 1) / 2.0 + 0.25 - 1.0;
    CHECK(up.at(1, x, 0) == doctest::Approx(u).epsilon(1e-12));
  }
  const Image down = bicubic_resize(r, 1, 2);
  for (std::size_t x = 3; x + 3 < down.width; ++x) {
    CHECK(down.at(1, x, 0) == doctest::Approx(2.0 * static_cast<double>(x) + 0.5).epsilon(1e-12));
  }
}

TEST_CASE("gaussian noise has the requested statistics and is seeded") {
  const Image base(128, 128, 3, 100.0);
  const Image n1 = add_gaussian_noise(base, 15.0, 42);
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < n1.data.size(); ++i) {
    const double d = n1.data[i] - 100.0;
    sum += d;
    sum2 += d * d;
  }
  const double n = static_cast<double>(n1.data.size());
  CHECK(std::abs(sum / n) < 0.3);
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(15.0).epsilon(0.02));
  CHECK(add_gaussian_noise(base, 15.0, 42).data == n1.data);
  CHECK(add_gaussian_noise(base, 15.0, 43).data != n1.data);
  CHECK(add_gaussian_noise(base, 0.0, 1).data == base.data);
}

TEST_CASE("modcrop trims to a multiple of the scale") {
  const Image m = modcrop(Image(13, 10, 3), 3);
  CHECK(m.width == 12);
  CHECK(m.height == 9);
  CHECK_THROWS_AS(modcrop(Image(2, 2, 3), 3), DimensionError);
}

TEST_CASE("synthetic corpus is deterministic and spans a range of complexities") {
  const auto a = synth_corpus(4, 10, 48);
  const auto b = synth_corpus(4, 10, 48);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
  CHECK(synth_corpus(5, 1, 48)[0].data != a[0].data);
  double lo = 1e9, hi = -1e9;
  for (const auto& img : a) {
    const double c = complexity(img);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  CHECK(lo == -1.0);  // index 0 is a constant field
  CHECK(hi > 3.0);
}

TEST_CASE("curate writes a byte-identical manifest for the same seed") {
  TempDir d("curate");
  write_synth_corpus(d.path / "src", 2, 12, 32);
  auto cfg = permissive();
  const auto r1 = curate(d.path / "src", d.path / "out1", cfg);
  const auto r2 = curate(d.path / "src", d.path / "out2", cfg);
  CHECK(slurp(r1.manifest_path) == slurp(r2.manifest_path));
  const auto& m = r1.manifest;
  CHECK(m.records.size() == 12);
  CHECK(m.partitions.train.size() == 10);
  CHECK(m.partitions.val.size() == 1);
  CHECK(m.partitions.test.size() == 1);
  for (const auto& r : m.records) {
    const Image lr = read_png(m.output_file(bicubic_output_path(r.path, 2)));
    CHECK(lr.width == 16);
    CHECK(lr.height == 16);
  }
  const auto loaded = DatasetManifest::load(r1.manifest_path);
  CHECK(loaded.to_json() == m.to_json());
  CHECK(fs::exists(loaded.source_file(m.records[0].path)));

  cfg.seed = 4;
  const auto r3 = curate(d.path / "src", d.path / "out3", cfg);
  CHECK(slurp(r3.manifest_path) != slurp(r1.manifest_path));
}

TEST_CASE("curate reports infeasible selections") {
  TempDir d("curate_infeasible");
  write_synth_corpus(d.path / "src", 2, 8, 24);
  auto cfg = permissive();
  cfg.n = 10;
  CHECK_THROWS_AS(curate(d.path / "src", d.path / "out", cfg), InfeasibleSelectionError);
}

TEST_CASE("curate config JSON rejects unknown keys and keeps defaults") {
  const auto c = CurateConfig::from_json(R"({"n": 6, "glcm": {"levels": 32}})");
  CHECK(c.n == 6);
  CHECK(c.glcm.levels == 32);
  CHECK(c.min_side == 800);
  CHECK(c.ratios == std::vector<double>{10, 1, 1});
  CHECK_THROWS_AS(CurateConfig::from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(CurateConfig::from_json(R"({"glcm": {"lvls": 3}})"), ConfigError);
  const auto round = CurateConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());
}
