#pragma once

// Training loop, optimizer, schedule, evaluation tables, ablations and the
// complexity/PSNR correlation study.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rwkvir/curation.hpp"
#include "rwkvir/glcm.hpp"
#include "rwkvir/image.hpp"
#include "rwkvir/metrics.hpp"
#include "rwkvir/model.hpp"
#include "rwkvir/tensor.hpp"

namespace rwkvir::train {

// ---------------------------------------------------------------------------
// Presets

struct BenchmarkPreset {
  std::string name;
  model::Task task = model::Task::sr;
  std::size_t batch_size = 0;
  std::size_t iters_short = 0;
  std::size_t iters_long = 0;
};

/// classic-sr, light-sr and denoise, in that order.
const std::vector<BenchmarkPreset>& benchmark_presets();
/// Throws ConfigError listing the known names.
const BenchmarkPreset& benchmark_preset(const std::string& name);
/// Canonical JSON array of the table (sorted keys, two-space indent, trailing newline).
std::string benchmark_presets_json();

/// Iteration counts are divided by this factor under --desk-scale.
inline constexpr std::size_t kDeskScaleDivisor = 1000;

// ---------------------------------------------------------------------------
// Configuration

enum class LossKind { l1, l2 };

struct TrainConfig {
  std::string preset = "toy";
  std::size_t batch_size = 8;
  std::size_t total_iters = 2000;
  double lr0 = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t patch = 0;  // LR patch side; 0 uses the model's patch_size
  std::uint64_t seed = 0;
  LossKind loss = LossKind::l1;
  std::vector<double> milestones{0.5, 0.75, 0.9};
  std::size_t log_every = 10;
  std::size_t val_every = 0;  // 0 validates only after the last iteration
  double noise_sigma = 0;     // denoising level; 0 takes the first one in the manifest

  std::vector<std::string> violations() const;
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static const std::vector<std::string>& keys();
};

/// Training settings for a named preset. Benchmark presets take their batch
/// size and short schedule from the table; "toy" is batch 8 for 2000 steps
/// at lr0 = 2e-3.
/// desk_scale divides the iteration count by kDeskScaleDivisor (never below 1)
/// and leaves the batch size alone.
TrainConfig train_preset(const std::string& name, bool desk_scale = false);

/// Model preset that pairs with a training preset name.
model::ModelConfig model_preset_for(const std::string& name);

/// lr0 halved once per milestone already reached.
double lr_at(std::size_t iter, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
class Adam {
 public:
  Adam(model::NamedParams<T> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One bias-corrected update from the current gradients. Throws NumericError
  /// naming the parameter when a gradient is not finite; nothing is updated then.
  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  model::NamedParams<T> params_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Data

struct ImagePair {
  std::string name;
  Image input;   // LR image (SR) or noisy image (denoising), 0..255
  Image target;  // HR image, modcropped to the scale for SR
};

/// Loads one partition ("train", "val" or "test") of a curated dataset.
/// Throws IoError when a required degradation is missing.
std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, const std::string& partition, model::Task task,
                                  std::size_t scale, double noise_sigma);

/// Applies one of the eight square symmetries: bit 0 flips columns, bit 1
/// flips rows, bit 2 transposes first.
Image dihedral(const Image& img, unsigned code);

struct Batch {
  Tensor<float> input;   // [B, 3, p, p] in [0, 1]
  Tensor<float> target;  // [B, 3, sp, sp]
};

/// Random crop plus a random symmetry per sample, identical for input and target.
Batch sample_batch(const std::vector<ImagePair>& pairs, std::size_t batch, std::size_t patch, std::size_t scale,
                   std::mt19937_64& rng);

Tensor<float> image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor<float>& t, std::size_t index = 0);

/// Full-image inference; the result is rounded to 8-bit levels.
Image restore(model::Model<float>& m, const Image& input);

// ---------------------------------------------------------------------------
// Training

struct LogRow {
  std::size_t iter = 0;
  double loss = 0;
  double lr = 0;
  std::optional<double> val_psnr;
  std::string to_json() const;
};

struct TrainResult {
  std::vector<LogRow> log;
  double final_loss = 0;
  double val_psnr = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path log_path;
};

/// Mean PSNR (Y with border crop for SR, RGB for denoising) of the model over
/// pairs, skipping exact reconstructions; +inf when every pair is exact.
double validation_psnr(model::Model<float>& m, const std::vector<ImagePair>& pairs);

/// Trains a float model from scratch. Writes out_dir/log.jsonl and
/// out_dir/model.ckpt (when out_dir is non-empty). Deterministic for fixed
/// seeds, configs and data.
TrainResult train(const TrainConfig& tcfg, const model::ModelConfig& mcfg, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir, const std::function<void(const LogRow&)>& on_log = {});

/// Same loop on already-loaded pairs; returns the trained model.
std::unique_ptr<model::Model<float>> train_on(const TrainConfig& tcfg, const model::ModelConfig& mcfg,
                                              const std::vector<ImagePair>& train_pairs,
                                              const std::vector<ImagePair>& val_pairs, TrainResult& result,
                                              const std::function<void(const LogRow&)>& on_log = {});

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::string method;
  std::string dataset;
  std::size_t images = 0;
  std::size_t excluded = 0;  // images left out of the PSNR mean
  double psnr = 0;
  double ssim = 0;
};

struct EvalTable {
  std::vector<EvalRow> rows;
  std::string to_json() const;
  std::string to_text() const;
};

/// Metrics per partition plus a "mean" row per method. SR tables always start
/// with a "bicubic" row; denoising tables start with the unprocessed "input".
/// m may be null to get the baseline alone. An image restored exactly by any
/// method has no finite PSNR; it is dropped from every method's PSNR mean (and
/// counted in `excluded`) but still enters SSIM. If all images are dropped the
/// PSNR is +inf.
EvalTable evaluate(model::Model<float>* m, const DatasetManifest& manifest, const std::vector<std::string>& partitions,
                   model::Task task, std::size_t scale, double noise_sigma);

/// Baseline output for one pair: bicubic upscaling for SR, the input itself for denoising.
Image baseline(const ImagePair& pair, model::Task task, std::size_t scale);

// ---------------------------------------------------------------------------
// Ablations

enum class AblationAxis { shift_position, wkv_setting, shift_method, ffn };
AblationAxis ablation_axis_from_string(const std::string& name);
std::string to_string(AblationAxis axis);

struct Variant {
  std::string label;
  model::ModelConfig config;
};

std::vector<Variant> ablation_variants(AblationAxis axis, const model::ModelConfig& base);

struct AblationRow {
  std::string label;
  std::size_t params = 0;
  double final_loss = 0;
  double psnr = 0;
  double ssim = 0;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::ffn;
  std::vector<AblationRow> rows;
  std::string to_csv() const;
  std::string to_text() const;
};

/// Trains every variant under the same seed, schedule and data, then scores the test partition.
AblationTable ablation_run(AblationAxis axis, const model::ModelConfig& base, const TrainConfig& tcfg,
                           const DatasetManifest& manifest, const std::function<void(const std::string&)>& progress = {});

// ---------------------------------------------------------------------------
// Correlation study

struct CorrelationRow {
  std::string name;
  double complexity = 0;
  double bpp = 0;
  double psnr = 0;
};

struct CorrelationResult {
  std::vector<CorrelationRow> rows;  // every image, in input order
  std::size_t used = 0;              // rows with finite PSNR entering the coefficients
  double pearson_complexity = 0;
  double pearson_bpp = 0;
  std::string to_json() const;
};

/// Degrades each HR image by bicubic downscaling, restores it (bicubic when
/// restorer is null), and correlates PSNR-Y with complexity and PNG bpp of the
/// HR image. Images restored perfectly are left out of the coefficients.
/// Throws EmptyInputError when fewer than 3 images remain.
CorrelationResult correlate(const std::vector<std::pair<std::string, Image>>& images, std::size_t scale,
                            model::Model<float>* restorer, const GlcmConfig& glcm_cfg = {});

/// Uses every record of the manifest as HR input.
CorrelationResult correlate(const DatasetManifest& manifest, std::size_t scale, model::Model<float>* restorer,
                            const GlcmConfig& glcm_cfg = {});

// ---------------------------------------------------------------------------
// Kernel benchmark

struct KernelTiming {
  std::size_t length = 0;
  double scan_ms = 0;
  double oracle_ms = 0;  // negative when the oracle was skipped
};

/// Median wall time over `repeats` runs of a [length, channels] Bi-WKV forward pass.
std::vector<KernelTiming> bench_kernel(const std::vector<std::size_t>& lengths, std::size_t channels,
                                       std::size_t repeats, bool with_oracle, std::uint64_t seed = 0);
std::string kernel_timings_csv(const std::vector<KernelTiming>& rows);

}  // namespace rwkvir::train
