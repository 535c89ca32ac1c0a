#include "rwkvir/curation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rwkvir/error.hpp"

namespace rwkvir {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> luma_plane(const Image& img) {
  std::vector<double> y(img.pixels());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* p = &img.data[i * img.channels];
    y[i] = img.channels >= 3 ? 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] : p[0];
  }
  return y;
}

void require_3x3(const Image& img, const char* what) {
  if (img.width < 3 || img.height < 3) throw DimensionError(std::string(what) + ": image smaller than 3x3");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double cubic(double x) {
  const double ax = std::abs(x), ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

std::string param_label(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

double blur_score(const Image& img) {
  require_3x3(img, "blur_score");
  const auto y = luma_plane(img);
  const std::size_t W = img.width, H = img.height;
  double sum = 0, sum2 = 0;
  for (std::size_t r = 1; r + 1 < H; ++r) {
    for (std::size_t c = 1; c + 1 < W; ++c) {
      const double lap = y[(r - 1) * W + c] + y[(r + 1) * W + c] + y[r * W + c - 1] + y[r * W + c + 1] -
                         4.0 * y[r * W + c];
      sum += lap;
      sum2 += lap * lap;
    }
  }
  const double n = static_cast<double>((H - 2) * (W - 2));
  const double mean = sum / n;
  return std::max(0.0, sum2 / n - mean * mean);
}

double flat_fraction(const Image& img, double grad_threshold) {
  require_3x3(img, "flat_fraction");
  const auto y = luma_plane(img);
  const std::size_t W = img.width, H = img.height;
  std::size_t flat = 0;
  auto at = [&](std::size_t r, std::size_t c) { return y[r * W + c]; };
  for (std::size_t r = 1; r + 1 < H; ++r) {
    for (std::size_t c = 1; c + 1 < W; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      if (std::sqrt(gx * gx + gy * gy) < grad_threshold) ++flat;
    }
  }
  return static_cast<double>(flat) / static_cast<double>((H - 2) * (W - 2));
}

ComplexityReport analyze_image(const Image& img, const GlcmConfig& glcm_cfg, double flat_grad_threshold) {
  ComplexityReport r;
  const auto s = image_glcm_stats(img, glcm_cfg);
  r.ent = s.ent;
  r.ene = s.ene;
  r.diss = s.diss;
  r.complexity = complexity_from_stats(s);
  r.bpp = png_bpp(img);
  r.blur_score = blur_score(img);
  r.flat_fraction = flat_fraction(img, flat_grad_threshold);
  return r;
}

ScanResult scan_dir(const fs::path& root, const GlcmConfig& glcm_cfg, double flat_grad_threshold) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("scan_dir: not a readable directory: " + root.string());
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    auto ext = it->path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(it->path());
  }
  if (ec) throw IoError("scan_dir: cannot traverse " + root.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());

  std::vector<std::optional<ImageRecord>> slots(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      const Image img = read_png(files[i]);
      ImageRecord rec;
      const fs::path rel = fs::relative(files[i], root);
      rec.path = rel.generic_string();
      rec.source_tag = std::distance(rel.begin(), rel.end()) > 1 ? rel.begin()->generic_string() : "";
      rec.width = img.width;
      rec.height = img.height;
      rec.report = analyze_image(img, glcm_cfg, flat_grad_threshold);
      slots[i] = std::move(rec);
    } catch (const Error&) {
    }
  }
  ScanResult out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (slots[i]) {
      out.records.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back(fs::relative(files[i], root).generic_string());
    }
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  return out;
}

std::vector<ImageRecord> gate_resolution(const std::vector<ImageRecord>& records, std::size_t min_side) {
  std::vector<ImageRecord> out;
  for (const auto& r : records) {
    if (std::min(r.width, r.height) >= min_side) out.push_back(r);
  }
  return out;
}

std::vector<ImageRecord> gate_quality(const std::vector<ImageRecord>& records, double blur_min, double flat_max) {
  std::vector<ImageRecord> out;
  for (const auto& r : records) {
    if (r.report.blur_score >= blur_min && r.report.flat_fraction <= flat_max) out.push_back(r);
  }
  return out;
}

double median_complexity(const std::vector<ImageRecord>& records) {
  if (records.empty()) throw EmptyInputError("median_complexity: no records");
  std::vector<double> c;
  for (const auto& r : records) c.push_back(r.report.complexity);
  std::sort(c.begin(), c.end());
  const std::size_t m = c.size() / 2;
  return c.size() % 2 ? c[m] : 0.5 * (c[m - 1] + c[m]);
}

std::vector<ImageRecord> balance_select(const std::vector<ImageRecord>& records, std::size_t n, double threshold,
                                        std::uint64_t seed, bool per_source) {
  if (n % 2 != 0) throw ContractError("balance_select: n must be even");
  std::vector<std::string> sources;
  {
    std::set<std::string> tags;
    for (const auto& r : records) tags.insert(r.source_tag);
    if (per_source && tags.size() > 1) {
      sources.assign(tags.begin(), tags.end());
    } else {
      sources.push_back("");
      per_source = false;
    }
  }
  const std::size_t groups = sources.size();
  if (n % (2 * groups) != 0) {
    throw ContractError("balance_select: n = " + std::to_string(n) + " is not divisible by 2 x " +
                        std::to_string(groups) + " sources");
  }
  const std::size_t per_side = n / (2 * groups);

  std::vector<ImageRecord> out;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<const ImageRecord*> below, above;
    for (const auto& r : records) {
      if (per_source && r.source_tag != sources[g]) continue;
      (r.report.complexity < threshold ? below : above).push_back(&r);
    }
    if (below.size() < per_side || above.size() < per_side) {
      std::string where = per_source ? " in source '" + sources[g] + "'" : "";
      throw InfeasibleSelectionError("balance_select: need " + std::to_string(per_side) + " per side" + where +
                                         ", have " + std::to_string(below.size()) + " below and " +
                                         std::to_string(above.size()) + " at or above the threshold",
                                     below.size(), above.size());
    }
    seeded_shuffle(below, mix_seed(seed, 2 * g));
    seeded_shuffle(above, mix_seed(seed, 2 * g + 1));
    for (std::size_t i = 0; i < per_side; ++i) {
      out.push_back(*below[i]);
      out.push_back(*above[i]);
    }
  }
  std::sort(out.begin(), out.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  return out;
}

std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& ratios) {
  if (ratios.empty()) throw ConfigError("partition: no ratios");
  for (double r : ratios) {
    if (!(r > 0) || !std::isfinite(r)) throw ConfigError("partition: ratios must be positive");
  }
  if (n < ratios.size()) {
    throw ContractError("partition: " + std::to_string(n) + " records cannot fill " + std::to_string(ratios.size()) +
                        " partitions");
  }
  const double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double q = static_cast<double>(n) * ratios[i] / total;
    sizes[i] = static_cast<std::size_t>(std::floor(q));
    frac[i] = q - std::floor(q);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      sizes[i] = 1;
    }
  }
  return sizes;
}

Partitions partition(const std::vector<ImageRecord>& records, const std::vector<double>& ratios,
                     std::uint64_t seed) {
  if (ratios.size() != 3) throw ConfigError("partition: expected three ratios (train, val, test)");
  const auto sizes = partition_sizes(records.size(), ratios);
  std::vector<std::string> paths;
  for (const auto& r : records) paths.push_back(r.path);
  std::sort(paths.begin(), paths.end());
  seeded_shuffle(paths, seed);
  Partitions p;
  auto it = paths.begin();
  p.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  p.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  p.test.assign(it, paths.end());
  for (auto* part : {&p.train, &p.val, &p.test}) std::sort(part->begin(), part->end());
  return p;
}

ResampleTaps bicubic_taps(std::size_t in_len, std::size_t out_len, double scale) {
  if (in_len == 0 || out_len == 0) throw DimensionError("bicubic: zero-length axis");
  const bool antialias = scale < 1.0;
  const double width = antialias ? 4.0 / scale : 4.0;
  ResampleTaps t;
  t.out_len = out_len;
  t.taps = static_cast<std::size_t>(std::ceil(width)) + 2;
  t.index.resize(out_len * t.taps);
  t.weight.resize(out_len * t.taps);
  for (std::size_t i = 0; i < out_len; ++i) {
    // 1-based source coordinate of output pixel i+1
    const double u = static_cast<double>(i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const double left = std::floor(u - width / 2.0);
    double total = 0;
    for (std::size_t j = 0; j < t.taps; ++j) {
      const double idx = left + static_cast<double>(j);
      const double d = u - idx;
      const double w = antialias ? scale * cubic(scale * d) : cubic(d);
      const double clamped = std::clamp(idx, 1.0, static_cast<double>(in_len));
      t.index[i * t.taps + j] = static_cast<std::size_t>(clamped) - 1;
      t.weight[i * t.taps + j] = w;
      total += w;
    }
    for (std::size_t j = 0; j < t.taps; ++j) t.weight[i * t.taps + j] /= total;
  }
  return t;
}

Image bicubic_resize(const Image& img, std::size_t num, std::size_t den) {
  if (num == 0 || den == 0) throw ContractError("bicubic_resize: scale must be positive");
  if (img.empty()) throw EmptyInputError("bicubic_resize: empty image");
  const std::size_t oh = (img.height * num + den - 1) / den, ow = (img.width * num + den - 1) / den;
  if (oh < 1 || ow < 1) throw DimensionError("bicubic_resize: output would be empty");
  if (num == den) return img;
  const double scale = static_cast<double>(num) / static_cast<double>(den);
  const std::size_t C = img.channels;

  const auto ty = bicubic_taps(img.height, oh, scale);
  Image mid(img.width, oh, C);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t j = 0; j < ty.taps; ++j) {
      const double w = ty.weight[y * ty.taps + j];
      const double* src = &img.data[ty.index[y * ty.taps + j] * img.width * C];
      double* dst = &mid.data[y * img.width * C];
      for (std::size_t k = 0; k < img.width * C; ++k) dst[k] += w * src[k];
    }
  }
  const auto tx = bicubic_taps(img.width, ow, scale);
  Image out(ow, oh, C);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t j = 0; j < tx.taps; ++j) {
        const double w = tx.weight[x * tx.taps + j];
        const double* src = &mid.data[(y * img.width + tx.index[x * tx.taps + j]) * C];
        for (std::size_t c = 0; c < C; ++c) out.data[(y * ow + x) * C + c] += w * src[c];
      }
    }
  }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw ContractError("add_gaussian_noise: sigma must be >= 0");
  Image out = img;
  if (sigma == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : out.data) v += dist(rng);
  return out;
}

Image modcrop(const Image& img, std::size_t scale) {
  if (scale == 0) throw ContractError("modcrop: scale must be positive");
  const std::size_t h = img.height - img.height % scale, w = img.width - img.width % scale;
  if (h == 0 || w == 0) throw DimensionError("modcrop: image smaller than the scale");
  return crop(img, 0, 0, h, w);
}

namespace {

/// Fractal value noise in [0, 1]: bilinear interpolation of random lattices,
/// each octave halving the cell size and scaling the amplitude by `gain`.
std::vector<double> value_noise(std::size_t size, double cell, int octaves, double gain, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> t(size * size, 0.0);
  double amp = 1.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const double c = std::max(1.0, cell / std::pow(2.0, o));
    const std::size_t gn = static_cast<std::size_t>(static_cast<double>(size) / c) + 2;
    std::vector<double> lattice(gn * gn);
    for (auto& v : lattice) v = U(rng);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double fy = y / c, fx = x / c;
        const auto iy = static_cast<std::size_t>(fy), ix = static_cast<std::size_t>(fx);
        const double ay = fy - iy, ax = fx - ix;
        const double v = (1 - ay) * ((1 - ax) * lattice[iy * gn + ix] + ax * lattice[iy * gn + ix + 1]) +
                         ay * ((1 - ax) * lattice[(iy + 1) * gn + ix] + ax * lattice[(iy + 1) * gn + ix + 1]);
        t[y * size + x] += amp * v;
      }
    norm += amp;
    amp *= gain;
  }
  for (auto& v : t) v /= norm;
  return t;
}

/// 3-tap [1 2 1]/4 blur applied `passes` times along both axes, clamped edges.
void soften(std::vector<double>& t, std::size_t size, int passes) {
  std::vector<double> tmp(t.size());
  for (int p = 0; p < passes; ++p) {
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t xl = x ? x - 1 : 0, xr = std::min(x + 1, size - 1);
        tmp[y * size + x] = 0.25 * t[y * size + xl] + 0.5 * t[y * size + x] + 0.25 * t[y * size + xr];
      }
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t yu = y ? y - 1 : 0, yd = std::min(y + 1, size - 1);
        t[y * size + x] = 0.25 * tmp[yu * size + x] + 0.5 * tmp[y * size + x] + 0.25 * tmp[yd * size + x];
      }
  }
}

}  // namespace

std::vector<Image> synth_corpus(std::uint64_t seed, std::size_t n, std::size_t size) {
  if (n == 0) throw ContractError("synth_corpus: n must be >= 1");
  if (size < 8) throw ContractError("synth_corpus: size must be >= 8");
  constexpr double kPi = 3.14159265358979323846;
  std::vector<Image> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int kind = static_cast<int>(i % 5);
    std::array<double, 3> c0{}, c1{};
    for (int c = 0; c < 3; ++c) c0[c] = 255.0 * U(rng);
    const double contrast = 0.15 + 0.85 * U(rng);
    for (int c = 0; c < 3; ++c) c1[c] = std::clamp(c0[c] + (U(rng) < 0.5 ? -1 : 1) * contrast * 255.0, 0.0, 255.0);
    std::vector<double> t(size * size, 0.0);
    switch (kind) {
      case 0:  // constant field
        break;
      case 1: {  // linear gradient
        const double th = 2 * kPi * U(rng);
        const double cx = std::cos(th), cy = std::sin(th);
        double lo = 1e300, hi = -1e300;
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) {
            const double v = cx * x + cy * y;
            t[y * size + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        for (auto& v : t) v = (v - lo) / (hi - lo);
        break;
      }
      case 2: {  // sinusoidal grating, frequency log-uniform in [0.01, 0.45] cycles/pixel
        const double f = std::exp(std::log(0.01) + U(rng) * (std::log(0.45) - std::log(0.01)));
        const double th = kPi * U(rng), ph = 2 * kPi * U(rng);
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x)
            t[y * size + x] = 0.5 + 0.5 * std::sin(2 * kPi * f * (x * std::cos(th) + y * std::sin(th)) + ph);
        break;
      }
      case 3: {  // checkerboard
        const std::size_t cell = 1 + static_cast<std::size_t>(U(rng) * 12);
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) t[y * size + x] = double(((y / cell) + (x / cell)) % 2);
        soften(t, size, static_cast<int>(cell / 3));
        break;
      }
      default:  // value noise
        t = value_noise(size, 2.0 + U(rng) * 22.0, 1 + static_cast<int>(U(rng) * 3), 0.5, rng);
        break;
    }
    // fine-grained surface texture of random strength on every non-constant field
    const double grain = kind == 0 ? 0.0 : 60.0 * U(rng) * U(rng);
    const auto tex = value_noise(size, 1.0 + 3.0 * U(rng), 2, 0.5, rng);
    Image img(size, size, 3);
    for (std::size_t p = 0; p < size * size; ++p) {
      const double g = grain * (tex[p] - 0.5);
      for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = std::clamp(std::nearbyint(c0[c] + (c1[c] - c0[c]) * t[p] + g), 0.0, 255.0);
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<fs::path> write_synth_corpus(const fs::path& dir, std::uint64_t seed, std::size_t n, std::size_t size) {
  fs::create_directories(dir);
  const auto images = synth_corpus(seed, n, size);
  std::vector<fs::path> paths;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04zu.png", i);
    paths.push_back(dir / name);
    write_png(paths.back(), images[i]);
  }
  return paths;
}

std::string bicubic_output_path(const std::string& record_path, std::size_t scale) {
  return "x" + std::to_string(scale) + "/" + record_path;
}

std::string noise_output_path(const std::string& record_path, double sigma) {
  return "noise" + param_label(sigma) + "/" + record_path;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

json report_json(const ImageRecord& r) {
  return {{"path", r.path},
          {"width", r.width},
          {"height", r.height},
          {"source_tag", r.source_tag},
          {"ent", r.report.ent},
          {"ene", r.report.ene},
          {"diss", r.report.diss},
          {"complexity", r.report.complexity},
          {"bpp", r.report.bpp},
          {"blur_score", r.report.blur_score},
          {"flat_fraction", r.report.flat_fraction}};
}

ImageRecord record_from_json(const json& j) {
  ImageRecord r;
  r.path = j.at("path");
  r.width = j.at("width");
  r.height = j.at("height");
  r.source_tag = j.value("source_tag", "");
  r.report.ent = j.at("ent");
  r.report.ene = j.at("ene");
  r.report.diss = j.at("diss");
  r.report.complexity = j.at("complexity");
  r.report.bpp = j.at("bpp");
  r.report.blur_score = j.at("blur_score");
  r.report.flat_fraction = j.at("flat_fraction");
  return r;
}

json config_json(const CurateConfig& c) {
  json offsets = json::array();
  for (auto [dy, dx] : c.glcm.offsets) offsets.push_back({dy, dx});
  return {{"glcm", {{"levels", c.glcm.levels}, {"offsets", offsets}, {"symmetric", c.glcm.symmetric}}},
          {"min_side", c.min_side},
          {"blur_min", c.blur_min},
          {"flat_max", c.flat_max},
          {"flat_grad_threshold", c.flat_grad_threshold},
          {"threshold_mode", c.threshold_mode},
          {"threshold_value", c.threshold_value},
          {"n", c.n},
          {"ratios", c.ratios},
          {"per_source", c.per_source},
          {"scales", c.scales},
          {"noise_sigmas", c.noise_sigmas}};
}

CurateConfig config_from_json(const json& j) {
  CurateConfig c;
  c.glcm.levels = j.at("glcm").at("levels");
  c.glcm.offsets.clear();
  for (const auto& o : j.at("glcm").at("offsets")) c.glcm.offsets.emplace_back(o.at(0), o.at(1));
  c.glcm.symmetric = j.at("glcm").at("symmetric");
  c.min_side = j.at("min_side");
  c.blur_min = j.at("blur_min");
  c.flat_max = j.at("flat_max");
  c.flat_grad_threshold = j.at("flat_grad_threshold");
  c.threshold_mode = j.at("threshold_mode");
  c.threshold_value = j.at("threshold_value");
  c.n = j.at("n");
  c.ratios = j.at("ratios").get<std::vector<double>>();
  c.per_source = j.at("per_source");
  c.scales = j.at("scales").get<std::vector<std::size_t>>();
  c.noise_sigmas = j.at("noise_sigmas").get<std::vector<double>>();
  return c;
}

}  // namespace

std::string CurateConfig::to_json() const {
  auto j = config_json(*this);
  j["seed"] = seed;
  return j.dump(2);
}

CurateConfig CurateConfig::from_json(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("curate config: ") + e.what());
  }
  if (!patch.is_object()) throw ConfigError("curate config: expected a JSON object");
  json full = json::parse(CurateConfig{}.to_json());
  auto reject_unknown = [](const json& given, const json& known, const std::string& where) {
    for (const auto& [k, _] : given.items()) {
      if (!known.contains(k)) {
        std::string list;
        for (const auto& [name, _v] : known.items()) list += (list.empty() ? "" : ", ") + name;
        throw ConfigError("curate config: unknown key '" + where + k + "'; valid keys: " + list);
      }
    }
  };
  reject_unknown(patch, full, "");
  if (patch.contains("glcm")) {
    if (!patch["glcm"].is_object()) throw ConfigError("curate config: glcm must be an object");
    reject_unknown(patch["glcm"], full["glcm"], "glcm.");
  }
  full.merge_patch(patch);
  try {
    auto c = config_from_json(full);
    c.seed = full.at("seed");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("curate config: ") + e.what());
  }
}

fs::path DatasetManifest::source_file(const std::string& record_path) const {
  return base_dir / source_root / record_path;
}

fs::path DatasetManifest::output_file(const std::string& relative) const { return base_dir / relative; }

std::string DatasetManifest::to_json() const {
  json j;
  j["version"] = version;
  j["seed"] = seed;
  j["source_root"] = source_root;
  auto cfg = config_json(config);
  cfg["seed"] = config.seed;
  j["selection_config"] = cfg;
  j["stage_counts"] = stage_counts;
  j["threshold"] = threshold;
  j["records"] = json::array();
  for (const auto& r : records) j["records"].push_back(report_json(r));
  j["partitions"] = {{"train", partitions.train}, {"val", partitions.val}, {"test", partitions.test}};
  j["degradations"] = json::array();
  for (const auto& d : degradations) {
    j["degradations"].push_back(
        {{"kind", d.kind}, {"param", d.param}, {"source", d.source}, {"output_path", d.output_path}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version");
    m.seed = j.at("seed");
    m.source_root = j.at("source_root");
    m.config = config_from_json(j.at("selection_config"));
    m.config.seed = j.at("selection_config").value("seed", m.seed);
    m.stage_counts = j.at("stage_counts").get<std::map<std::string, std::size_t>>();
    m.threshold = j.at("threshold");
    for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
    m.partitions.train = j.at("partitions").at("train").get<std::vector<std::string>>();
    m.partitions.val = j.at("partitions").at("val").get<std::vector<std::string>>();
    m.partitions.test = j.at("partitions").at("test").get<std::vector<std::string>>();
    for (const auto& d : j.at("degradations")) {
      m.degradations.push_back({d.at("kind"), d.at("param"), d.at("source"), d.at("output_path")});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open manifest " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  auto m = from_json(ss.str());
  m.base_dir = file.parent_path();
  return m;
}

CurateResult curate(const fs::path& src_dir, const fs::path& out_dir, const CurateConfig& cfg) {
  cfg.glcm.validate();
  if (cfg.threshold_mode != "value" && cfg.threshold_mode != "median") {
    throw ConfigError("curate: threshold_mode must be 'value' or 'median'");
  }
  auto scan = scan_dir(src_dir, cfg.glcm, cfg.flat_grad_threshold);
  if (scan.records.empty()) throw EmptyInputError("curate: no decodable images under " + src_dir.string());

  DatasetManifest m;
  m.seed = cfg.seed;
  m.config = cfg;
  m.stage_counts["scanned"] = scan.records.size();
  m.stage_counts["skipped"] = scan.skipped.size();
  const auto by_res = gate_resolution(scan.records, cfg.min_side);
  m.stage_counts["resolution_gate"] = by_res.size();
  const auto by_quality = gate_quality(by_res, cfg.blur_min, cfg.flat_max);
  m.stage_counts["quality_gate"] = by_quality.size();
  if (by_quality.empty()) throw InfeasibleSelectionError("curate: no records survive the gates", 0, 0);

  m.threshold = cfg.threshold_mode == "median" ? median_complexity(by_quality) : cfg.threshold_value;
  std::size_t n = cfg.n;
  if (n == 0) {
    std::size_t below = 0;
    for (const auto& r : by_quality) below += r.report.complexity < m.threshold;
    n = 2 * std::min(below, by_quality.size() - below);
  }
  m.records = balance_select(by_quality, n, m.threshold, cfg.seed, cfg.per_source);
  m.stage_counts["selected"] = m.records.size();
  m.partitions = partition(m.records, cfg.ratios, mix_seed(cfg.seed, 0x5eed));

  fs::create_directories(out_dir);
  std::error_code ec;
  const auto rel_root = fs::relative(fs::absolute(src_dir), fs::absolute(out_dir), ec);
  m.source_root = (!ec && !rel_root.empty()) ? rel_root.generic_string() : fs::absolute(src_dir).generic_string();
  m.base_dir = out_dir;

  for (std::size_t i = 0; i < m.records.size(); ++i) {
    for (auto s : cfg.scales) {
      m.degradations.push_back(
          {"bicubic", static_cast<double>(s), m.records[i].path, bicubic_output_path(m.records[i].path, s)});
    }
    for (double sigma : cfg.noise_sigmas) {
      m.degradations.push_back({"gaussian_noise", sigma, m.records[i].path, noise_output_path(m.records[i].path, sigma)});
    }
  }

  if (cfg.write_images) {
    const std::size_t per_record = cfg.scales.size() + cfg.noise_sigmas.size();
    std::vector<std::string> errors(m.records.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      try {
        const Image hr = read_png(src_dir / m.records[i].path);
        for (std::size_t k = 0; k < per_record; ++k) {
          const auto& d = m.degradations[i * per_record + k];
          const fs::path out = out_dir / d.output_path;
          fs::create_directories(out.parent_path());
          if (d.kind == "bicubic") {
            const auto s = static_cast<std::size_t>(d.param);
            write_png(out, bicubic_resize(modcrop(hr, s), 1, s));
          } else {
            const Image noisy = add_gaussian_noise(hr, d.param, mix_seed(cfg.seed, i * 1000 + k));
            write_png(out, noisy);
            write_float_image(fs::path(out).replace_extension(".rwf"), noisy);
          }
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) throw IoError("curate: " + e);
    }
  }

  CurateResult res;
  res.manifest_path = out_dir / "manifest.json";
  {
    std::ofstream os(res.manifest_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + res.manifest_path.string());
    os << m.to_json();
  }
  res.manifest = std::move(m);
  res.skipped = std::move(scan.skipped);
  return res;
}

}  // namespace rwkvir
