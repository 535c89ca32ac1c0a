#pragma once

// RWKV-based restoration network: shallow conv, a stack of GLLLs (layers of
// GLLB blocks with a trailing conv and residual), global feature residual and
// a task-specific reconstruction head. Feature maps are NCHW.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rwkvir/tensor.hpp"
#include "rwkvir/wkv.hpp"

namespace rwkvir::model {

enum class ShiftKind { none, q_shift, dc_shift };
enum class WkvKind { bi_h, bi_v, cross, layer_cross };
enum class FfnKind { channel_mix, mlp, cab };
enum class Task { sr, denoise };
/// Where the depthwise-conv module sits in a block. replace_shift uses it as the
/// token shift; the other positions add it as a residual branch next to a
/// block whose shift is configured separately.
enum class DcPosition { replace_shift, before_sm, between_sm_cm, behind_cm, parallel };

std::string to_string(ShiftKind k);
std::string to_string(WkvKind k);
std::string to_string(FfnKind k);
std::string to_string(Task t);
std::string to_string(DcPosition p);

struct ModelConfig {
  std::size_t embed_channels = 48;
  std::vector<std::size_t> blocks_per_layer{6, 6, 6, 6};
  std::size_t scale = 2;
  ShiftKind shift = ShiftKind::dc_shift;
  std::size_t shift_p = 1;  // q_shift distance
  std::size_t dc_ks = 3;    // dc_shift depthwise kernel size
  WkvKind wkv = WkvKind::cross;
  wkv::CrossCombine cross_combine = wkv::CrossCombine::mean;
  FfnKind ffn = FfnKind::channel_mix;
  DcPosition dc_position = DcPosition::replace_shift;
  std::size_t patch_size = 64;
  Task task = Task::sr;

  /// Every violated constraint, one message each; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError joining all violations.
  void validate() const;

  /// JSON object with every field (sorted keys).
  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ConfigError listing the valid keys.
  static ModelConfig from_json(const std::string& text);
  static const std::vector<std::string>& keys();
};

/// Named presets: classic-sr, light-sr, denoise, toy.
ModelConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
struct Conv {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  std::size_t padding = 0;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct DcShiftParams {
  Conv<T> pw1;
  Tensor<T> dw_weight;  // [C, ks, ks]
  Tensor<T> dw_bias;    // [C]
  Conv<T> pw2;
  std::size_t ks = 3;
};

template <typename T>
struct SpatialMixParams {
  Tensor<T> mu;  // q_shift mixing scalar [1]
  DcShiftParams<T> dc;
  Tensor<T> w_r, w_k, w_v, w_o;  // [C, C]
  std::vector<wkv::WkvParams<T>> dirs;  // one per scan direction used by the block
};

template <typename T>
struct ChannelMixParams {
  Tensor<T> w_r;  // [C, C]
  Tensor<T> w_k;  // [2C, C]
  Tensor<T> w_v;  // [C, 2C]
};

template <typename T>
struct MlpParams {
  Conv<T> fc1;  // C -> 2C, 1x1
  Conv<T> fc2;  // 2C -> C, 1x1
};

template <typename T>
struct CabParams {
  Conv<T> conv1, conv2;   // 3x3, C -> C
  Conv<T> squeeze, excite;  // 1x1, C -> C/4 -> C
};

template <typename T>
struct FfnParams {
  FfnKind kind = FfnKind::channel_mix;
  ChannelMixParams<T> cm;
  MlpParams<T> mlp;
  CabParams<T> cab;
};

template <typename T>
struct GllbParams {
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
  SpatialMixParams<T> spatial;
  FfnParams<T> ffn;
  Tensor<T> beta;  // [1]
  DcShiftParams<T> branch;  // residual conv branch when dc_position != replace_shift
};

/// Which scan directions a block runs, given the variant and its index within its layer.
std::vector<wkv::ScanOrder> block_scan_orders(WkvKind kind, std::size_t index_in_layer);

// ---------------------------------------------------------------------------
// Block-level forward functions (x is NCHW)

template <typename T>
Tensor<T> dc_shift(const Tensor<T>& x, const DcShiftParams<T>& p);

template <typename T>
Tensor<T> apply_shift(const Tensor<T>& x, const SpatialMixParams<T>& p, const ModelConfig& cfg);

/// shift -> R/K/V projections -> WKV over the given scan orders -> (sigmoid(R) * wkv) W_O.
template <typename T>
Tensor<T> spatial_mix(const Tensor<T>& x, const SpatialMixParams<T>& p, const ModelConfig& cfg,
                      const std::vector<wkv::ScanOrder>& orders);

template <typename T>
Tensor<T> channel_mix(const Tensor<T>& x, const ChannelMixParams<T>& p);

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p);

/// F_g = F + SpatialMix(LN1 F); returns beta * F_g + FFN(LN2 F_g), with the
/// optional conv branch inserted per cfg.dc_position.
template <typename T>
Tensor<T> gllb_forward(const Tensor<T>& x, const GllbParams<T>& p, const ModelConfig& cfg,
                       const std::vector<wkv::ScanOrder>& orders);

/// Deterministically initialized block parameters (used by the model and by tests).
template <typename T>
GllbParams<T> init_gllb(const ModelConfig& cfg, std::size_t index_in_layer, std::uint64_t seed);

template <typename T>
void collect_gllb(GllbParams<T>& p, const std::string& prefix, NamedParams<T>& out);

// ---------------------------------------------------------------------------
// Network

struct ScanLogEntry {
  std::size_t layer;
  std::size_t block;
  wkv::ScanOrder order;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// x [B, 3, H, W] with values in [0, 1]; returns [B, 3, sH, sW] on the same scale.
  Tensor<T> forward(const Tensor<T>& x);

  const ModelConfig& config() const { return cfg_; }
  NamedParams<T>& parameters() { return params_; }
  std::size_t parameter_count() const;
  GllbParams<T>& block(std::size_t layer, std::size_t index) { return layers_.at(layer).blocks.at(index); }

  void set_scan_logging(bool on) { log_scans_ = on; }
  const std::vector<ScanLogEntry>& scan_log() const { return scan_log_; }
  void clear_scan_log() { scan_log_.clear(); }

 private:
  struct Layer {
    std::vector<GllbParams<T>> blocks;
    Conv<T> conv;
  };

  ModelConfig cfg_;
  Conv<T> conv_first_;
  std::vector<Layer> layers_;
  Conv<T> conv_after_body_;
  Conv<T> conv_before_up_;
  std::vector<Conv<T>> up_convs_;
  std::vector<std::size_t> up_factors_;
  Conv<T> conv_last_;
  NamedParams<T> params_;
  bool log_scans_ = false;
  std::vector<ScanLogEntry> scan_log_;
};

/// Validates the config and initializes every parameter from the seed.
template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  return std::make_unique<Model<T>>(cfg, seed);
}

/// Per-channel RGB mean subtracted from inputs (on the [0, 1] scale).
inline constexpr double kRgbMean[3] = {0.4488, 0.4371, 0.4040};

}  // namespace rwkvir::model
