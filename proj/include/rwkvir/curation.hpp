#pragma once

// Dataset curation: directory scanning and scoring, quality gates, balanced
// complexity selection, partitioning, degradation synthesis and manifests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rwkvir/glcm.hpp"
#include "rwkvir/image.hpp"

namespace rwkvir {

struct ImageRecord {
  std::string path;  // relative to the scanned root, '/'-separated
  std::size_t width = 0;
  std::size_t height = 0;
  std::string source_tag;  // first directory component below the root, or ""
  ComplexityReport report;
};

// ---------------------------------------------------------------------------
// Per-image scores

/// Population variance of the 3x3 Laplacian (center -4) over interior luma pixels.
double blur_score(const Image& img);
/// Fraction of interior pixels whose Sobel gradient magnitude (luma) is below the threshold.
double flat_fraction(const Image& img, double grad_threshold);
ComplexityReport analyze_image(const Image& img, const GlcmConfig& glcm_cfg, double flat_grad_threshold);

struct ScanResult {
  std::vector<ImageRecord> records;  // sorted by path
  std::vector<std::string> skipped;  // files that failed to decode
};

/// Scores every *.png below root (recursively). Throws IoError if root is not a readable directory.
ScanResult scan_dir(const std::filesystem::path& root, const GlcmConfig& glcm_cfg = {},
                    double flat_grad_threshold = 20.0);

// ---------------------------------------------------------------------------
// Selection

std::vector<ImageRecord> gate_resolution(const std::vector<ImageRecord>& records, std::size_t min_side = 800);
/// Keeps blur_score >= blur_min and flat_fraction <= flat_max.
std::vector<ImageRecord> gate_quality(const std::vector<ImageRecord>& records, double blur_min, double flat_max);

double median_complexity(const std::vector<ImageRecord>& records);

/// Seeded selection of n/2 records with complexity < threshold and n/2 with
/// complexity >= threshold. With per_source and more than one source tag,
/// every source contributes n / (2 * sources) records to each side.
/// Result is sorted by path. Throws InfeasibleSelectionError with side counts.
std::vector<ImageRecord> balance_select(const std::vector<ImageRecord>& records, std::size_t n, double threshold,
                                        std::uint64_t seed, bool per_source = true);

/// Partition sizes for n records: largest-remainder rounding of the ratios,
/// then every empty partition takes one record from the currently largest.
std::vector<std::size_t> partition_sizes(std::size_t n, const std::vector<double>& ratios);

struct Partitions {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Seeded shuffle, then a contiguous split into train/val/test.
Partitions partition(const std::vector<ImageRecord>& records, const std::vector<double>& ratios = {10, 1, 1},
                     std::uint64_t seed = 0);

/// Deterministic in-place Fisher-Yates shuffle driven by mt19937_64.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

// ---------------------------------------------------------------------------
// Degradations

/// One-dimensional resampling taps: output i reads in[index[i*taps + j]] with weight[i*taps + j].
struct ResampleTaps {
  std::size_t out_len = 0;
  std::size_t taps = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

/// Cubic kernel (a = -0.5) taps for scale = out/in with antialiasing when
/// downscaling and clamped edge indices.
ResampleTaps bicubic_taps(std::size_t in_len, std::size_t out_len, double scale);

/// Resizes by scale = num/den. Output extents are ceil(extent * scale).
/// Rows are resampled first, then columns.
Image bicubic_resize(const Image& img, std::size_t num, std::size_t den);

/// Adds i.i.d. N(0, sigma^2) noise on the 0..255 scale, unclipped.
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

/// Crops the bottom/right so both extents are multiples of scale.
Image modcrop(const Image& img, std::size_t scale);

/// Deterministic synthetic textures: constant fields, gradients, sinusoidal
/// gratings, checkerboards and value noise.
std::vector<Image> synth_corpus(std::uint64_t seed, std::size_t n, std::size_t size = 96);
/// Writes synth_corpus images as synth_0000.png ... into dir.
std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir, std::uint64_t seed,
                                                      std::size_t n, std::size_t size = 96);

// ---------------------------------------------------------------------------
// Pipeline and manifest

struct CurateConfig {
  GlcmConfig glcm;
  std::size_t min_side = 800;
  double blur_min = 100.0;
  double flat_max = 0.6;
  double flat_grad_threshold = 20.0;
  /// "value" uses threshold_value; "median" uses the median complexity of the gated records.
  std::string threshold_mode = "value";
  double threshold_value = 0.0;
  std::size_t n = 0;  // 0 selects as many as the balance allows
  std::vector<double> ratios{10, 1, 1};
  bool per_source = true;
  std::vector<std::size_t> scales{2, 3, 4};
  std::vector<double> noise_sigmas{};
  std::uint64_t seed = 0;
  bool write_images = true;

  /// JSON object of the selection settings (write_images is not included).
  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ConfigError listing the valid keys.
  static CurateConfig from_json(const std::string& text);
};

struct Degradation {
  std::string kind;  // "bicubic" or "gaussian_noise"
  double param = 0;  // scale or sigma
  std::string source;
  std::string output_path;  // relative to the manifest directory
};

struct DatasetManifest {
  int version = 1;
  std::uint64_t seed = 0;
  std::string source_root;  // relative to the manifest directory when possible
  CurateConfig config;
  std::map<std::string, std::size_t> stage_counts;
  double threshold = 0;
  std::vector<ImageRecord> records;
  Partitions partitions;
  std::vector<Degradation> degradations;
  /// Directory the manifest was loaded from (not serialized).
  std::filesystem::path base_dir;

  std::filesystem::path source_file(const std::string& record_path) const;
  std::filesystem::path output_file(const std::string& relative) const;

  /// Canonical JSON text (sorted keys, two-space indent, trailing newline).
  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  static DatasetManifest load(const std::filesystem::path& file);
};

struct CurateResult {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::vector<std::string> skipped;
};

/// scan -> resolution gate -> blur/flat gate -> balanced selection ->
/// partition -> degradations, then writes out_dir/manifest.json.
/// Degraded images go to out_dir/x{s}/ and out_dir/noise{sigma}/ (PNG plus
/// .rwf float sidecar for noise).
CurateResult curate(const std::filesystem::path& src_dir, const std::filesystem::path& out_dir,
                    const CurateConfig& cfg);

/// Path of a degraded image relative to the manifest directory.
std::string bicubic_output_path(const std::string& record_path, std::size_t scale);
std::string noise_output_path(const std::string& record_path, double sigma);

}  // namespace rwkvir
