#include "rwkvir/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/ops.hpp"

namespace rwkvir::model {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Enum names

namespace {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<ShiftKind> {
  static constexpr std::pair<ShiftKind, const char*> table[] = {
      {ShiftKind::none, "none"}, {ShiftKind::q_shift, "q_shift"}, {ShiftKind::dc_shift, "dc_shift"}};
};
template <>
struct EnumNames<WkvKind> {
  static constexpr std::pair<WkvKind, const char*> table[] = {{WkvKind::bi_h, "bi_h"},
                                                              {WkvKind::bi_v, "bi_v"},
                                                              {WkvKind::cross, "cross"},
                                                              {WkvKind::layer_cross, "layer_cross"}};
};
template <>
struct EnumNames<FfnKind> {
  static constexpr std::pair<FfnKind, const char*> table[] = {
      {FfnKind::channel_mix, "channel_mix"}, {FfnKind::mlp, "mlp"}, {FfnKind::cab, "cab"}};
};
template <>
struct EnumNames<Task> {
  static constexpr std::pair<Task, const char*> table[] = {{Task::sr, "sr"}, {Task::denoise, "denoise"}};
};
template <>
struct EnumNames<DcPosition> {
  static constexpr std::pair<DcPosition, const char*> table[] = {{DcPosition::replace_shift, "replace_shift"},
                                                                 {DcPosition::before_sm, "before_sm"},
                                                                 {DcPosition::between_sm_cm, "between_sm_cm"},
                                                                 {DcPosition::behind_cm, "behind_cm"},
                                                                 {DcPosition::parallel, "parallel"}};
};
template <>
struct EnumNames<wkv::CrossCombine> {
  static constexpr std::pair<wkv::CrossCombine, const char*> table[] = {{wkv::CrossCombine::mean, "mean"},
                                                                        {wkv::CrossCombine::sum, "sum"}};
};

template <typename E>
std::string enum_name(E e) {
  for (auto [v, n] : EnumNames<E>::table) {
    if (v == e) return n;
  }
  return "?";
}

template <typename E>
E enum_from(const std::string& key, const std::string& s) {
  std::string valid;
  for (auto [v, n] : EnumNames<E>::table) {
    if (s == n) return v;
    valid += (valid.empty() ? "" : ", ") + std::string(n);
  }
  throw ConfigError("model config: " + key + " = '" + s + "' is not one of {" + valid + "}");
}

}  // namespace

std::string to_string(ShiftKind k) { return enum_name(k); }
std::string to_string(WkvKind k) { return enum_name(k); }
std::string to_string(FfnKind k) { return enum_name(k); }
std::string to_string(Task t) { return enum_name(t); }
std::string to_string(DcPosition p) { return enum_name(p); }

// ---------------------------------------------------------------------------
// Config

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  if (embed_channels == 0 || embed_channels % 16 != 0) {
    v.push_back("embed_channels must be a positive multiple of 16 (got " + std::to_string(embed_channels) + ")");
  }
  if (blocks_per_layer.empty()) v.push_back("blocks_per_layer must not be empty");
  for (auto b : blocks_per_layer) {
    if (b == 0) {
      v.push_back("blocks_per_layer entries must be >= 1");
      break;
    }
  }
  if (scale < 1 || scale > 4) v.push_back("scale must be in {1, 2, 3, 4} (got " + std::to_string(scale) + ")");
  if (task == Task::denoise && scale != 1) v.push_back("task denoise requires scale 1");
  const bool uses_dc = shift == ShiftKind::dc_shift || dc_position != DcPosition::replace_shift;
  if (uses_dc && dc_ks % 2 == 0) {
    v.push_back("dc_ks must be odd (got " + std::to_string(dc_ks) + ")");
  }
  if (patch_size < 8) v.push_back("patch_size must be >= 8 (got " + std::to_string(patch_size) + ")");
  return v;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k{"blocks_per_layer", "cross_combine", "dc_ks",   "dc_position",
                                          "embed_channels",   "ffn",           "patch_size", "scale",
                                          "shift",            "shift_p",       "task",    "wkv"};
  return k;
}

std::string ModelConfig::to_json() const {
  json j{{"embed_channels", embed_channels},
         {"blocks_per_layer", blocks_per_layer},
         {"scale", scale},
         {"shift", enum_name(shift)},
         {"shift_p", shift_p},
         {"dc_ks", dc_ks},
         {"wkv", enum_name(wkv)},
         {"cross_combine", enum_name(cross_combine)},
         {"ffn", enum_name(ffn)},
         {"dc_position", enum_name(dc_position)},
         {"patch_size", patch_size},
         {"task", enum_name(task)}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  const auto& valid = keys();
  for (const auto& [k, _] : j.items()) {
    if (std::find(valid.begin(), valid.end(), k) == valid.end()) {
      std::string list;
      for (const auto& s : valid) list += (list.empty() ? "" : ", ") + s;
      throw ConfigError("model config: unknown key '" + k + "'; valid keys: " + list);
    }
  }
  ModelConfig c;
  try {
    if (j.contains("embed_channels")) c.embed_channels = j["embed_channels"];
    if (j.contains("blocks_per_layer")) c.blocks_per_layer = j["blocks_per_layer"].get<std::vector<std::size_t>>();
    if (j.contains("scale")) c.scale = j["scale"];
    if (j.contains("shift")) c.shift = enum_from<ShiftKind>("shift", j["shift"]);
    if (j.contains("shift_p")) c.shift_p = j["shift_p"];
    if (j.contains("dc_ks")) c.dc_ks = j["dc_ks"];
    if (j.contains("wkv")) c.wkv = enum_from<WkvKind>("wkv", j["wkv"]);
    if (j.contains("cross_combine")) c.cross_combine = enum_from<wkv::CrossCombine>("cross_combine", j["cross_combine"]);
    if (j.contains("ffn")) c.ffn = enum_from<FfnKind>("ffn", j["ffn"]);
    if (j.contains("dc_position")) c.dc_position = enum_from<DcPosition>("dc_position", j["dc_position"]);
    if (j.contains("patch_size")) c.patch_size = j["patch_size"];
    if (j.contains("task")) c.task = enum_from<Task>("task", j["task"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"classic-sr", "light-sr", "denoise", "toy"};
  return names;
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "classic-sr") {
    c.embed_channels = 192;
    c.blocks_per_layer = {6, 6, 6, 6, 6, 6};
    c.wkv = WkvKind::cross;
    c.patch_size = 64;
  } else if (name == "light-sr") {
    c.embed_channels = 48;
    c.blocks_per_layer = {6, 6, 6, 6};
    c.wkv = WkvKind::layer_cross;
    c.patch_size = 64;
  } else if (name == "denoise") {
    c.embed_channels = 192;
    c.blocks_per_layer = {6, 6, 6, 6, 6, 6};
    c.wkv = WkvKind::cross;
    c.patch_size = 128;
    c.scale = 1;
    c.task = Task::denoise;
  } else if (name == "toy") {
    c.embed_channels = 16;
    c.blocks_per_layer = {2, 2};
    c.wkv = WkvKind::cross;
    c.patch_size = 24;
  } else {
    std::string list;
    for (const auto& s : preset_names()) list += (list.empty() ? "" : ", ") + s;
    throw ConfigError("unknown preset '" + name + "'; valid presets: " + list);
  }
  return c;
}

std::vector<wkv::ScanOrder> block_scan_orders(WkvKind kind, std::size_t index_in_layer) {
  switch (kind) {
    case WkvKind::bi_h:
      return {wkv::ScanOrder::horizontal};
    case WkvKind::bi_v:
      return {wkv::ScanOrder::vertical};
    case WkvKind::cross:
      return {wkv::ScanOrder::horizontal, wkv::ScanOrder::vertical};
    case WkvKind::layer_cross:
      return {index_in_layer % 2 == 0 ? wkv::ScanOrder::horizontal : wkv::ScanOrder::vertical};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

template <typename T>
struct Init {
  std::mt19937_64 rng;

  explicit Init(std::uint64_t seed) : rng(seed) {}

  /// Normal(0, std) truncated to +-2 std by resampling.
  Tensor<T> trunc_normal(Shape shape, double std) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<T> v(numel_of(shape));
    for (auto& x : v) {
      double z;
      do {
        z = d(rng);
      } while (std::abs(z) > 2.0);
      x = static_cast<T>(z * std);
    }
    return Tensor<T>::from_data(std::move(shape), std::move(v), true);
  }

  Tensor<T> uniform(Shape shape, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    std::vector<T> v(numel_of(shape));
    for (auto& x : v) x = static_cast<T>(d(rng));
    return Tensor<T>::from_data(std::move(shape), std::move(v), true);
  }

  Tensor<T> constant(Shape shape, double value) {
    return Tensor<T>::from_data(shape, std::vector<T>(numel_of(shape), static_cast<T>(value)), true);
  }

  Conv<T> conv(std::size_t cin, std::size_t cout, std::size_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    Conv<T> c;
    c.weight = uniform({cout, cin, k, k}, bound);
    c.bias = uniform({cout}, bound);
    c.padding = k / 2;
    return c;
  }

  DcShiftParams<T> dc_shift(std::size_t C, std::size_t ks) {
    DcShiftParams<T> d;
    d.ks = ks;
    d.pw1 = conv(C, C, 1);
    const double bound = 1.0 / static_cast<double>(ks);
    d.dw_weight = uniform({C, ks, ks}, bound);
    d.dw_bias = uniform({C}, bound);
    d.pw2 = conv(C, C, 1);
    return d;
  }
};

template <typename T>
void add_dc(DcShiftParams<T>& d, const std::string& prefix, NamedParams<T>& out);

template <typename T>
void add_conv(Conv<T>& c, const std::string& prefix, NamedParams<T>& out) {
  out.emplace_back(prefix + ".weight", &c.weight);
  out.emplace_back(prefix + ".bias", &c.bias);
}

template <typename T>
void add_dc(DcShiftParams<T>& d, const std::string& prefix, NamedParams<T>& out) {
  add_conv(d.pw1, prefix + ".pw1", out);
  out.emplace_back(prefix + ".dw.weight", &d.dw_weight);
  out.emplace_back(prefix + ".dw.bias", &d.dw_bias);
  add_conv(d.pw2, prefix + ".pw2", out);
}

std::uint64_t split_seed(std::mt19937_64& master) { return master(); }

}  // namespace

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, bias, padding);
}

template <typename T>
GllbParams<T> init_gllb(const ModelConfig& cfg, std::size_t index_in_layer, std::uint64_t seed) {
  const std::size_t C = cfg.embed_channels;
  Init<T> in(seed);
  GllbParams<T> p;
  p.ln1_g = in.constant({C}, 1.0);
  p.ln1_b = in.constant({C}, 0.0);
  p.ln2_g = in.constant({C}, 1.0);
  p.ln2_b = in.constant({C}, 0.0);

  auto& s = p.spatial;
  if (cfg.shift == ShiftKind::q_shift) s.mu = in.constant({1}, 0.0);
  if (cfg.shift == ShiftKind::dc_shift) s.dc = in.dc_shift(C, cfg.dc_ks);
  s.w_r = in.trunc_normal({C, C}, 0.02);
  s.w_k = in.trunc_normal({C, C}, 0.02);
  s.w_v = in.trunc_normal({C, C}, 0.02);
  s.w_o = in.trunc_normal({C, C}, 0.02);
  for (std::size_t d = 0; d < block_scan_orders(cfg.wkv, index_in_layer).size(); ++d) {
    s.dirs.push_back(wkv::WkvParams<T>::init(C, true));
  }

  auto& f = p.ffn;
  f.kind = cfg.ffn;
  switch (cfg.ffn) {
    case FfnKind::channel_mix:
      f.cm.w_r = in.trunc_normal({C, C}, 0.02);
      f.cm.w_k = in.trunc_normal({2 * C, C}, 0.02);
      f.cm.w_v = in.trunc_normal({C, 2 * C}, 0.02);
      break;
    case FfnKind::mlp:
      f.mlp.fc1 = in.conv(C, 2 * C, 1);
      f.mlp.fc2 = in.conv(2 * C, C, 1);
      break;
    case FfnKind::cab: {
      const std::size_t squeeze = std::max<std::size_t>(1, C / 4);
      f.cab.conv1 = in.conv(C, C, 3);
      f.cab.conv2 = in.conv(C, C, 3);
      f.cab.squeeze = in.conv(C, squeeze, 1);
      f.cab.excite = in.conv(squeeze, C, 1);
      break;
    }
  }
  p.beta = in.constant({1}, 1.0);
  if (cfg.dc_position != DcPosition::replace_shift) p.branch = in.dc_shift(C, cfg.dc_ks);
  return p;
}

template <typename T>
void collect_gllb(GllbParams<T>& p, const std::string& prefix, NamedParams<T>& out) {
  out.emplace_back(prefix + ".ln1.gamma", &p.ln1_g);
  out.emplace_back(prefix + ".ln1.beta", &p.ln1_b);
  auto& s = p.spatial;
  const std::string sp = prefix + ".spatial";
  if (s.mu.defined()) out.emplace_back(sp + ".mu", &s.mu);
  if (s.dc.pw1.weight.defined()) add_dc(s.dc, sp + ".dc", out);
  out.emplace_back(sp + ".w_r", &s.w_r);
  out.emplace_back(sp + ".w_k", &s.w_k);
  out.emplace_back(sp + ".w_v", &s.w_v);
  out.emplace_back(sp + ".w_o", &s.w_o);
  for (std::size_t d = 0; d < s.dirs.size(); ++d) {
    out.emplace_back(sp + ".wkv" + std::to_string(d) + ".w", &s.dirs[d].w);
    out.emplace_back(sp + ".wkv" + std::to_string(d) + ".u", &s.dirs[d].u);
  }
  out.emplace_back(prefix + ".ln2.gamma", &p.ln2_g);
  out.emplace_back(prefix + ".ln2.beta", &p.ln2_b);
  auto& f = p.ffn;
  const std::string fp = prefix + ".ffn";
  switch (f.kind) {
    case FfnKind::channel_mix:
      out.emplace_back(fp + ".w_r", &f.cm.w_r);
      out.emplace_back(fp + ".w_k", &f.cm.w_k);
      out.emplace_back(fp + ".w_v", &f.cm.w_v);
      break;
    case FfnKind::mlp:
      add_conv(f.mlp.fc1, fp + ".fc1", out);
      add_conv(f.mlp.fc2, fp + ".fc2", out);
      break;
    case FfnKind::cab:
      add_conv(f.cab.conv1, fp + ".conv1", out);
      add_conv(f.cab.conv2, fp + ".conv2", out);
      add_conv(f.cab.squeeze, fp + ".squeeze", out);
      add_conv(f.cab.excite, fp + ".excite", out);
      break;
  }
  out.emplace_back(prefix + ".beta", &p.beta);
  if (p.branch.pw1.weight.defined()) add_dc(p.branch, prefix + ".branch", out);
}

// ---------------------------------------------------------------------------
// Block forward

template <typename T>
Tensor<T> dc_shift(const Tensor<T>& x, const DcShiftParams<T>& p) {
  if (p.ks % 2 == 0) throw ConfigError("dc_shift: kernel size must be odd");
  auto h = ops::gelu(p.pw1(x));
  h = ops::gelu(ops::depthwise_conv2d(h, p.dw_weight, p.dw_bias, p.ks / 2));
  return p.pw2(h);
}

template <typename T>
Tensor<T> apply_shift(const Tensor<T>& x, const SpatialMixParams<T>& p, const ModelConfig& cfg) {
  switch (cfg.shift) {
    case ShiftKind::none:
      return x;
    case ShiftKind::q_shift:
      return ops::q_shift(x, p.mu, cfg.shift_p);
    case ShiftKind::dc_shift:
      return dc_shift(x, p.dc);
  }
  return x;
}

template <typename T>
Tensor<T> spatial_mix(const Tensor<T>& x, const SpatialMixParams<T>& p, const ModelConfig& cfg,
                      const std::vector<wkv::ScanOrder>& orders) {
  if (orders.empty() || orders.size() != p.dirs.size()) {
    throw ContractError("spatial_mix: one WKV parameter set is required per scan order");
  }
  const auto s = apply_shift(x, p, cfg);
  const auto r = ops::channel_linear(s, p.w_r);
  const auto k = ops::channel_linear(s, p.w_k);
  const auto v = ops::channel_linear(s, p.w_v);
  Tensor<T> y = wkv::biwkv_nchw(k, v, p.dirs[0].w, p.dirs[0].u, orders[0]);
  for (std::size_t d = 1; d < orders.size(); ++d) {
    y = ops::add(y, wkv::biwkv_nchw(k, v, p.dirs[d].w, p.dirs[d].u, orders[d]));
  }
  if (orders.size() > 1 && cfg.cross_combine == wkv::CrossCombine::mean) {
    y = ops::scale(y, static_cast<T>(1.0 / static_cast<double>(orders.size())));
  }
  return ops::channel_linear(ops::mul(ops::sigmoid(r), y), p.w_o);
}

template <typename T>
Tensor<T> channel_mix(const Tensor<T>& x, const ChannelMixParams<T>& p) {
  const auto r = ops::sigmoid(ops::channel_linear(x, p.w_r));
  const auto k = ops::square(ops::relu(ops::channel_linear(x, p.w_k)));
  return ops::mul(r, ops::channel_linear(k, p.w_v));
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p) {
  switch (p.kind) {
    case FfnKind::channel_mix:
      return channel_mix(x, p.cm);
    case FfnKind::mlp:
      return p.mlp.fc2(ops::gelu(p.mlp.fc1(x)));
    case FfnKind::cab: {
      const auto h = p.cab.conv2(ops::gelu(p.cab.conv1(x)));
      const auto a = ops::sigmoid(p.cab.excite(ops::relu(p.cab.squeeze(ops::global_avg_pool(h)))));
      return ops::mul_channelwise(h, a);
    }
  }
  throw ConfigError("ffn_forward: unknown kind");
}

template <typename T>
Tensor<T> gllb_forward(const Tensor<T>& x, const GllbParams<T>& p, const ModelConfig& cfg,
                       const std::vector<wkv::ScanOrder>& orders) {
  constexpr double eps = 1e-5;
  const DcPosition pos = cfg.dc_position;
  Tensor<T> in = x;
  if (pos == DcPosition::before_sm) in = ops::add(in, dc_shift(in, p.branch));
  const auto ln1 = ops::layer_norm(in, p.ln1_g, p.ln1_b, eps, 1);
  Tensor<T> fg = ops::add(in, spatial_mix(ln1, p.spatial, cfg, orders));
  if (pos == DcPosition::parallel) fg = ops::add(fg, dc_shift(ln1, p.branch));
  if (pos == DcPosition::between_sm_cm) fg = ops::add(fg, dc_shift(fg, p.branch));
  const auto f = ffn_forward(ops::layer_norm(fg, p.ln2_g, p.ln2_b, eps, 1), p.ffn);
  Tensor<T> out = ops::add(ops::mul_scalar(fg, p.beta), f);
  if (pos == DcPosition::behind_cm) out = ops::add(out, dc_shift(out, p.branch));
  return out;
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t C = cfg_.embed_channels;
  std::mt19937_64 master(seed);
  Init<T> in(split_seed(master));

  conv_first_ = in.conv(3, C, 3);
  add_conv(conv_first_, "conv_first", params_);
  layers_.resize(cfg_.blocks_per_layer.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t b = 0; b < cfg_.blocks_per_layer[l]; ++b) {
      layers_[l].blocks.push_back(init_gllb<T>(cfg_, b, split_seed(master)));
    }
    layers_[l].conv = in.conv(C, C, 3);
  }
  conv_after_body_ = in.conv(C, C, 3);
  if (cfg_.task == Task::sr) {
    conv_before_up_ = in.conv(C, C, 3);
    if (cfg_.scale == 4) {
      up_factors_ = {2, 2};
    } else if (cfg_.scale > 1) {
      up_factors_ = {cfg_.scale};
    }
    for (auto f : up_factors_) up_convs_.push_back(in.conv(C, C * f * f, 3));
  }
  conv_last_ = in.conv(C, 3, 3);

  // registration happens after all vectors reach their final size
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t b = 0; b < layers_[l].blocks.size(); ++b) {
      collect_gllb(layers_[l].blocks[b], "layers." + std::to_string(l) + ".blocks." + std::to_string(b), params_);
    }
    add_conv(layers_[l].conv, "layers." + std::to_string(l) + ".conv", params_);
  }
  add_conv(conv_after_body_, "conv_after_body", params_);
  if (cfg_.task == Task::sr) {
    add_conv(conv_before_up_, "conv_before_up", params_);
    for (std::size_t i = 0; i < up_convs_.size(); ++i) add_conv(up_convs_[i], "up." + std::to_string(i), params_);
  }
  add_conv(conv_last_, "conv_last", params_);
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t->numel();
  return n;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x) {
  if (x.ndim() != 4 || x.dim(1) != 3) throw DimensionError("model: expected input [B, 3, H, W], got " + shape_str(x.shape()));
  const T neg_mean[3] = {static_cast<T>(-kRgbMean[0]), static_cast<T>(-kRgbMean[1]), static_cast<T>(-kRgbMean[2])};
  const T pos_mean[3] = {static_cast<T>(kRgbMean[0]), static_cast<T>(kRgbMean[1]), static_cast<T>(kRgbMean[2])};

  const auto x0 = ops::add_channel_constant(x, std::span<const T>(neg_mean, 3));
  const auto fs = conv_first_(x0);
  Tensor<T> f = fs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Tensor<T> y = f;
    for (std::size_t b = 0; b < layers_[l].blocks.size(); ++b) {
      const auto orders = block_scan_orders(cfg_.wkv, b);
      if (log_scans_) {
        for (auto o : orders) scan_log_.push_back({l, b, o});
      }
      y = gllb_forward(y, layers_[l].blocks[b], cfg_, orders);
    }
    f = ops::add(layers_[l].conv(y), f);
  }
  const auto fh = ops::add(fs, conv_after_body_(f));

  Tensor<T> out;
  if (cfg_.task == Task::sr) {
    Tensor<T> h = ops::gelu(conv_before_up_(fh));
    for (std::size_t i = 0; i < up_convs_.size(); ++i) h = ops::pixel_shuffle(up_convs_[i](h), up_factors_[i]);
    out = conv_last_(h);
  } else {
    out = ops::add(conv_last_(fh), x0);
  }
  return ops::add_channel_constant(out, std::span<const T>(pos_mean, 3));
}

#define RWKVIR_INSTANTIATE_MODEL(T)                                                                         \
  template struct Conv<T>;                                                                                  \
  template GllbParams<T> init_gllb<T>(const ModelConfig&, std::size_t, std::uint64_t);                      \
  template void collect_gllb<T>(GllbParams<T>&, const std::string&, NamedParams<T>&);                       \
  template Tensor<T> dc_shift<T>(const Tensor<T>&, const DcShiftParams<T>&);                                \
  template Tensor<T> apply_shift<T>(const Tensor<T>&, const SpatialMixParams<T>&, const ModelConfig&);      \
  template Tensor<T> spatial_mix<T>(const Tensor<T>&, const SpatialMixParams<T>&, const ModelConfig&,       \
                                    const std::vector<wkv::ScanOrder>&);                                    \
  template Tensor<T> channel_mix<T>(const Tensor<T>&, const ChannelMixParams<T>&);                          \
  template Tensor<T> ffn_forward<T>(const Tensor<T>&, const FfnParams<T>&);                                 \
  template Tensor<T> gllb_forward<T>(const Tensor<T>&, const GllbParams<T>&, const ModelConfig&,            \
                                     const std::vector<wkv::ScanOrder>&);                                   \
  template class Model<T>;

RWKVIR_INSTANTIATE_MODEL(float)
RWKVIR_INSTANTIATE_MODEL(double)

}  // namespace rwkvir::model
