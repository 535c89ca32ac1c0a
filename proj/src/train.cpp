#include "rwkvir/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rwkvir/checkpoint.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/ops.hpp"
#include "rwkvir/wkv.hpp"

namespace rwkvir::train {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

std::string fmt(double v, int prec) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Presets

const std::vector<BenchmarkPreset>& benchmark_presets() {
  static const std::vector<BenchmarkPreset> table{
      {"classic-sr", model::Task::sr, 32, 100000, 500000},
      {"light-sr", model::Task::sr, 64, 50000, 500000},
      {"denoise", model::Task::denoise, 16, 100000, 500000},
  };
  return table;
}

const BenchmarkPreset& benchmark_preset(const std::string& name) {
  for (const auto& p : benchmark_presets()) {
    if (p.name == name) return p;
  }
  std::vector<std::string> names;
  for (const auto& p : benchmark_presets()) names.push_back(p.name);
  throw ConfigError("unknown benchmark preset '" + name + "'; valid presets: " + join(names));
}

std::string benchmark_presets_json() {
  json arr = json::array();
  for (const auto& p : benchmark_presets()) {
    arr.push_back({{"name", p.name},
                   {"task", model::to_string(p.task)},
                   {"batch_size", p.batch_size},
                   {"iters_short", p.iters_short},
                   {"iters_long", p.iters_long}});
  }
  return arr.dump(2) + "\n";
}

TrainConfig train_preset(const std::string& name, bool desk_scale) {
  TrainConfig c;
  c.preset = name;
  if (name == "toy") {
    c.batch_size = 8;
    c.total_iters = 2000;
    c.lr0 = 2e-3;
  } else {
    model::preset(name);  // rejects unknown names with the full list
    const auto& b = benchmark_preset(name);
    c.batch_size = b.batch_size;
    c.total_iters = b.iters_short;
    if (desk_scale) c.total_iters = std::max<std::size_t>(1, c.total_iters / kDeskScaleDivisor);
  }
  return c;
}

model::ModelConfig model_preset_for(const std::string& name) { return model::preset(name); }

double lr_at(std::size_t iter, const TrainConfig& cfg) {
  double lr = cfg.lr0;
  for (double m : cfg.milestones) {
    if (static_cast<double>(iter) >= m * static_cast<double>(cfg.total_iters)) lr *= 0.5;
  }
  return lr;
}

// ---------------------------------------------------------------------------
// TrainConfig

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (batch_size < 1) v.push_back("batch_size must be >= 1");
  if (total_iters < 1) v.push_back("total_iters must be >= 1");
  if (!(lr0 > 0) || !std::isfinite(lr0)) v.push_back("lr0 must be positive and finite");
  if (!(beta1 >= 0 && beta1 < 1)) v.push_back("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) v.push_back("beta2 must lie in [0, 1)");
  if (!(eps > 0)) v.push_back("eps must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] > 0 && milestones[i] < 1)) v.push_back("milestones must lie in (0, 1)");
    if (i > 0 && !(milestones[i] > milestones[i - 1])) v.push_back("milestones must be strictly increasing");
  }
  if (log_every < 1) v.push_back("log_every must be >= 1");
  if (noise_sigma < 0) v.push_back("noise_sigma must be >= 0");
  return v;
}

void TrainConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) {
    std::string msg = "invalid train config:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"batch_size", "beta1",      "beta2",       "eps",   "log_every",
                                          "loss",       "lr0",        "milestones",  "noise_sigma", "patch",
                                          "preset",     "seed",       "total_iters", "val_every"};
  return k;
}

std::string TrainConfig::to_json() const {
  json j{{"preset", preset},         {"batch_size", batch_size}, {"total_iters", total_iters},
         {"lr0", lr0},               {"beta1", beta1},           {"beta2", beta2},
         {"eps", eps},               {"patch", patch},           {"seed", seed},
         {"loss", loss == LossKind::l1 ? "l1" : "l2"},
         {"milestones", milestones}, {"log_every", log_every},   {"val_every", val_every},
         {"noise_sigma", noise_sigma}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  const auto& valid = keys();
  for (const auto& [k, _] : j.items()) {
    if (std::find(valid.begin(), valid.end(), k) == valid.end()) {
      throw ConfigError("train config: unknown key '" + k + "'; valid keys: " + join(valid));
    }
  }
  TrainConfig c;
  try {
    if (j.contains("preset")) c.preset = j["preset"];
    if (j.contains("batch_size")) c.batch_size = j["batch_size"];
    if (j.contains("total_iters")) c.total_iters = j["total_iters"];
    if (j.contains("lr0")) c.lr0 = j["lr0"];
    if (j.contains("beta1")) c.beta1 = j["beta1"];
    if (j.contains("beta2")) c.beta2 = j["beta2"];
    if (j.contains("eps")) c.eps = j["eps"];
    if (j.contains("patch")) c.patch = j["patch"];
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("loss")) {
      const std::string l = j["loss"];
      if (l == "l1") {
        c.loss = LossKind::l1;
      } else if (l == "l2") {
        c.loss = LossKind::l2;
      } else {
        throw ConfigError("train config: loss must be l1 or l2, got '" + l + "'");
      }
    }
    if (j.contains("milestones")) c.milestones = j["milestones"].get<std::vector<double>>();
    if (j.contains("log_every")) c.log_every = j["log_every"];
    if (j.contains("val_every")) c.val_every = j["val_every"];
    if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(model::NamedParams<T> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [_, t] : params_) {
    m_.emplace_back(t->numel(), 0.0);
    v_.emplace_back(t->numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& [name, t] : params_) {
    for (T g : t->grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter " + name + " at optimizer step " +
                           std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor<T>* t = params_[p].second;
    const auto g = t->grad();
    auto w = t->mutable_data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [_, t] : params_) t->zero_grad();
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------
// Data

std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, const std::string& partition, model::Task task,
                                  std::size_t scale, double noise_sigma) {
  const std::vector<std::string>* names = nullptr;
  if (partition == "train") {
    names = &manifest.partitions.train;
  } else if (partition == "val") {
    names = &manifest.partitions.val;
  } else if (partition == "test") {
    names = &manifest.partitions.test;
  } else {
    throw ConfigError("unknown partition '" + partition + "'; valid partitions: train, val, test");
  }

  const std::string kind = task == model::Task::sr ? "bicubic" : "gaussian_noise";
  double param = task == model::Task::sr ? static_cast<double>(scale) : noise_sigma;
  if (task == model::Task::denoise && param == 0) {
    for (const auto& d : manifest.degradations) {
      if (d.kind == kind) {
        param = d.param;
        break;
      }
    }
  }

  std::vector<ImagePair> out;
  out.reserve(names->size());
  for (const auto& name : *names) {
    const Degradation* deg = nullptr;
    for (const auto& d : manifest.degradations) {
      if (d.source == name && d.kind == kind && d.param == param) {
        deg = &d;
        break;
      }
    }
    if (deg == nullptr) {
      throw IoError("manifest has no " + kind + " degradation (" + fmt(param, 4) + ") for " + name);
    }
    ImagePair pair;
    pair.name = name;
    Image hr = read_png(manifest.source_file(name));
    if (task == model::Task::sr) {
      pair.target = modcrop(hr, scale);
      pair.input = read_png(manifest.output_file(deg->output_path));
      if (pair.input.width * scale != pair.target.width || pair.input.height * scale != pair.target.height) {
        throw IoError("LR image for " + name + " does not match its modcropped HR size");
      }
    } else {
      pair.target = std::move(hr);
      pair.input = read_float_image(fs::path(manifest.output_file(deg->output_path)).replace_extension(".rwf"));
      if (pair.input.width != pair.target.width || pair.input.height != pair.target.height) {
        throw IoError("noisy image for " + name + " does not match the clean size");
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

Image dihedral(const Image& img, unsigned code) {
  const bool transpose = (code & 4U) != 0;
  const bool flip_x = (code & 1U) != 0;
  const bool flip_y = (code & 2U) != 0;
  const std::size_t ow = transpose ? img.height : img.width;
  const std::size_t oh = transpose ? img.width : img.height;
  Image out(ow, oh, img.channels);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t ty = flip_y ? oh - 1 - y : y;
      const std::size_t tx = flip_x ? ow - 1 - x : x;
      const std::size_t sy = transpose ? tx : ty;
      const std::size_t sx = transpose ? ty : tx;
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

namespace {

void write_chw(const Image& img, float* dst) {
  const std::size_t plane = img.pixels();
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        dst[c * plane + y * img.width + x] = static_cast<float>(img.at(y, x, c) / 255.0);
      }
    }
  }
}

}  // namespace

Batch sample_batch(const std::vector<ImagePair>& pairs, std::size_t batch, std::size_t patch, std::size_t scale,
                   std::mt19937_64& rng) {
  if (pairs.empty()) throw EmptyInputError("no training pairs");
  const std::size_t hp = patch * scale;
  std::vector<float> in(batch * 3 * patch * patch);
  std::vector<float> tg(batch * 3 * hp * hp);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& p = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
    if (p.input.width < patch || p.input.height < patch) {
      throw ConfigError("patch " + std::to_string(patch) + " exceeds input image " + p.name + " (" +
                        std::to_string(p.input.width) + "x" + std::to_string(p.input.height) + ")");
    }
    const std::size_t y = std::uniform_int_distribution<std::size_t>(0, p.input.height - patch)(rng);
    const std::size_t x = std::uniform_int_distribution<std::size_t>(0, p.input.width - patch)(rng);
    const unsigned code = std::uniform_int_distribution<unsigned>(0, 7)(rng);
    write_chw(dihedral(crop(p.input, y, x, patch, patch), code), in.data() + b * 3 * patch * patch);
    write_chw(dihedral(crop(p.target, y * scale, x * scale, hp, hp), code), tg.data() + b * 3 * hp * hp);
  }
  return {Tensor<float>::from_data({batch, 3, patch, patch}, std::move(in)),
          Tensor<float>::from_data({batch, 3, hp, hp}, std::move(tg))};
}

Tensor<float> image_to_tensor(const Image& img) {
  if (img.channels != 3) throw DimensionError("expected an RGB image");
  std::vector<float> data(3 * img.pixels());
  write_chw(img, data.data());
  return Tensor<float>::from_data({1, 3, img.height, img.width}, std::move(data));
}

Image tensor_to_image(const Tensor<float>& t, std::size_t index) {
  if (t.ndim() != 4 || t.shape()[1] != 3) throw DimensionError("expected [B, 3, H, W], got " + shape_str(t.shape()));
  const std::size_t h = t.shape()[2], w = t.shape()[3];
  const auto d = t.data();
  const float* src = d.data() + index * 3 * h * w;
  Image img(w, h, 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 255.0 * src[c * h * w + y * w + x];
    }
  }
  return img;
}

Image restore(model::Model<float>& m, const Image& input) {
  NoGradGuard guard;
  return quantize_u8(tensor_to_image(m.forward(image_to_tensor(input))));
}

// ---------------------------------------------------------------------------
// Training

std::string LogRow::to_json() const {
  json j{{"iter", iter}, {"loss", loss}, {"lr", lr}};
  j["val_psnr"] = val_psnr ? number_or_inf(*val_psnr) : json(nullptr);
  return j.dump();
}

namespace {

MetricConfig metric_for(model::Task task, std::size_t scale) {
  return task == model::Task::sr ? sr_metric_config(scale) : denoise_metric_config();
}

}  // namespace

double validation_psnr(model::Model<float>& m, const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw EmptyInputError("no validation pairs");
  const auto& cfg = m.config();
  const auto mc = metric_for(cfg.task, cfg.scale);
  double sum = 0;
  std::size_t finite = 0;
  for (const auto& p : pairs) {
    const double v = psnr(p.target, restore(m, p.input), mc);
    if (std::isfinite(v)) {
      sum += v;
      ++finite;
    }
  }
  return finite > 0 ? sum / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
}

std::unique_ptr<model::Model<float>> train_on(const TrainConfig& tcfg, const model::ModelConfig& mcfg,
                                              const std::vector<ImagePair>& train_pairs,
                                              const std::vector<ImagePair>& val_pairs, TrainResult& result,
                                              const std::function<void(const LogRow&)>& on_log) {
  tcfg.validate();
  mcfg.validate();
  if (train_pairs.empty()) throw EmptyInputError("training partition is empty");
  const std::size_t patch = tcfg.patch != 0 ? tcfg.patch : mcfg.patch_size;
  const std::size_t scale = mcfg.task == model::Task::sr ? mcfg.scale : 1;

  auto m = model::build_model<float>(mcfg, splitmix(tcfg.seed, 0));
  Adam<float> opt(m->parameters(), tcfg.beta1, tcfg.beta2, tcfg.eps);
  std::mt19937_64 rng(splitmix(tcfg.seed, 1));

  result.log.clear();
  for (std::size_t it = 0; it < tcfg.total_iters; ++it) {
    const double lr = lr_at(it, tcfg);
    auto batch = sample_batch(train_pairs, tcfg.batch_size, patch, scale, rng);
    opt.zero_grad();
    auto pred = m->forward(batch.input);
    auto loss = tcfg.loss == LossKind::l1 ? ops::l1_loss(pred, batch.target) : ops::mse_loss(pred, batch.target);
    const double lv = static_cast<double>(loss.item());
    if (!std::isfinite(lv)) throw NumericError("non-finite loss at iteration " + std::to_string(it));
    backward(loss);
    opt.step(lr);
    result.final_loss = lv;

    const bool last = it + 1 == tcfg.total_iters;
    const bool validate_now =
        !val_pairs.empty() && (last || (tcfg.val_every != 0 && (it + 1) % tcfg.val_every == 0));
    if (validate_now || last || it % tcfg.log_every == 0) {
      LogRow row{it, lv, lr, std::nullopt};
      if (validate_now) row.val_psnr = validation_psnr(*m, val_pairs);
      if (last && row.val_psnr) result.val_psnr = *row.val_psnr;
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return m;
}

TrainResult train(const TrainConfig& tcfg, const model::ModelConfig& mcfg, const DatasetManifest& manifest,
                  const fs::path& out_dir, const std::function<void(const LogRow&)>& on_log) {
  const std::size_t scale = mcfg.task == model::Task::sr ? mcfg.scale : 1;
  const auto train_pairs = load_pairs(manifest, "train", mcfg.task, scale, tcfg.noise_sigma);
  const auto val_pairs = load_pairs(manifest, "val", mcfg.task, scale, tcfg.noise_sigma);
  TrainResult result;
  auto m = train_on(tcfg, mcfg, train_pairs, val_pairs, result, on_log);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    result.log_path = out_dir / "log.jsonl";
    std::ofstream os(result.log_path);
    if (!os) throw IoError("cannot write " + result.log_path.string());
    for (const auto& row : result.log) os << row.to_json() << "\n";
    result.checkpoint = out_dir / "model.ckpt";
    json extra{{"train", json::parse(tcfg.to_json())}, {"final_loss", result.final_loss}};
    checkpoint::save_model(result.checkpoint, *m, extra.dump());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

Image baseline(const ImagePair& pair, model::Task task, std::size_t scale) {
  if (task == model::Task::sr) return quantize_u8(bicubic_resize(pair.input, scale, 1));
  return quantize_u8(pair.input);
}

std::string EvalTable::to_json() const {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"method", r.method},
                   {"dataset", r.dataset},
                   {"images", r.images},
                   {"excluded", r.excluded},
                   {"psnr", number_or_inf(r.psnr)},
                   {"ssim", r.ssim}});
  }
  return arr.dump(2) + "\n";
}

std::string EvalTable::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-10s %6s %8s %9s %8s\n", "method", "dataset", "images", "excluded", "PSNR",
                "SSIM");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %-10s %6zu %8zu %9s %8.4f\n", r.method.c_str(), r.dataset.c_str(),
                  r.images, r.excluded, fmt(r.psnr, 2).c_str(), r.ssim);
    os << line;
  }
  return os.str();
}

EvalTable evaluate(model::Model<float>* m, const DatasetManifest& manifest, const std::vector<std::string>& partitions,
                   model::Task task, std::size_t scale, double noise_sigma) {
  if (m != nullptr && m->config().task != task) throw ConfigError("checkpoint task does not match the evaluation task");
  if (task != model::Task::sr) scale = 1;
  const auto mc = metric_for(task, scale);

  std::vector<std::string> methods{task == model::Task::sr ? "bicubic" : "input"};
  if (m != nullptr) methods.emplace_back("model");
  const std::size_t M = methods.size();

  // rows[method][partition]
  std::vector<std::vector<EvalRow>> rows(M);
  for (const auto& part : partitions) {
    const auto pairs = load_pairs(manifest, part, task, scale, noise_sigma);
    if (pairs.empty()) continue;
    std::vector<std::vector<double>> ps(M, std::vector<double>(pairs.size()));
    std::vector<std::vector<double>> ss(M, std::vector<double>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      for (std::size_t k = 0; k < M; ++k) {
        const Image out = methods[k] == "model" ? restore(*m, pairs[i].input) : baseline(pairs[i], task, scale);
        ps[k][i] = psnr(pairs[i].target, out, mc);
        ss[k][i] = ssim(pairs[i].target, out, mc);
      }
    }
    for (std::size_t k = 0; k < M; ++k) {
      EvalRow row{methods[k], part, pairs.size(), 0, 0, 0};
      std::size_t kept = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        bool finite = true;
        for (std::size_t q = 0; q < M; ++q) finite = finite && std::isfinite(ps[q][i]);
        if (finite) {
          row.psnr += ps[k][i];
          ++kept;
        }
        row.ssim += ss[k][i];
      }
      row.excluded = pairs.size() - kept;
      row.psnr = kept > 0 ? row.psnr / static_cast<double>(kept) : std::numeric_limits<double>::infinity();
      row.ssim /= static_cast<double>(pairs.size());
      rows[k].push_back(row);
    }
  }
  if (rows[0].empty()) throw EmptyInputError("no images in the requested partitions");

  EvalTable table;
  for (std::size_t k = 0; k < M; ++k) {
    EvalRow mean{methods[k], "mean", 0, 0, 0, 0};
    for (const auto& r : rows[k]) {
      table.rows.push_back(r);
      mean.images += r.images;
      mean.excluded += r.excluded;
      mean.psnr += r.psnr;
      mean.ssim += r.ssim;
    }
    mean.psnr /= static_cast<double>(rows[k].size());
    mean.ssim /= static_cast<double>(rows[k].size());
    table.rows.push_back(mean);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Ablations

AblationAxis ablation_axis_from_string(const std::string& name) {
  if (name == "shift_position") return AblationAxis::shift_position;
  if (name == "wkv_setting") return AblationAxis::wkv_setting;
  if (name == "shift_method") return AblationAxis::shift_method;
  if (name == "ffn") return AblationAxis::ffn;
  throw ConfigError("unknown ablation axis '" + name + "'; valid axes: shift_position, wkv_setting, shift_method, ffn");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::shift_position:
      return "shift_position";
    case AblationAxis::wkv_setting:
      return "wkv_setting";
    case AblationAxis::shift_method:
      return "shift_method";
    case AblationAxis::ffn:
      return "ffn";
  }
  return "?";
}

std::vector<Variant> ablation_variants(AblationAxis axis, const model::ModelConfig& base) {
  using namespace model;
  std::vector<Variant> out;
  switch (axis) {
    case AblationAxis::shift_position: {
      for (auto pos : {DcPosition::replace_shift, DcPosition::before_sm, DcPosition::between_sm_cm,
                       DcPosition::behind_cm, DcPosition::parallel}) {
        ModelConfig c = base;
        c.dc_position = pos;
        if (pos == DcPosition::replace_shift) {
          c.shift = ShiftKind::dc_shift;
        } else {
          c.shift = ShiftKind::q_shift;
          c.shift_p = 1;
        }
        out.push_back({to_string(pos), c});
      }
      break;
    }
    case AblationAxis::wkv_setting: {
      for (auto k : {WkvKind::bi_h, WkvKind::cross}) {
        ModelConfig c = base;
        c.wkv = k;
        out.push_back({to_string(k), c});
      }
      break;
    }
    case AblationAxis::shift_method: {
      ModelConfig q = base;
      q.dc_position = DcPosition::replace_shift;
      q.shift = ShiftKind::q_shift;
      q.shift_p = 1;
      out.push_back({"q_shift_p1", q});
      ModelConfig none = q;
      none.shift_p = 0;
      out.push_back({"none", none});
      for (std::size_t ks : {3, 5}) {
        ModelConfig c = q;
        c.shift = ShiftKind::dc_shift;
        c.dc_ks = ks;
        out.push_back({"dc_shift_ks" + std::to_string(ks), c});
      }
      break;
    }
    case AblationAxis::ffn: {
      for (auto f : {FfnKind::mlp, FfnKind::cab, FfnKind::channel_mix}) {
        ModelConfig c = base;
        c.ffn = f;
        out.push_back({to_string(f), c});
      }
      break;
    }
  }
  return out;
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os << "axis,variant,params,final_loss,psnr,ssim\n";
  for (const auto& r : rows) {
    os << to_string(axis) << "," << r.label << "," << r.params << "," << fmt(r.final_loss, 6) << ","
       << fmt(r.psnr, 4) << "," << fmt(r.ssim, 6) << "\n";
  }
  return os.str();
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %9s %11s %9s %8s\n", to_string(axis).c_str(), "params", "final_loss",
                "PSNR", "SSIM");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %9zu %11.6f %9s %8.4f\n", r.label.c_str(), r.params, r.final_loss,
                  fmt(r.psnr, 2).c_str(), r.ssim);
    os << line;
  }
  return os.str();
}

AblationTable ablation_run(AblationAxis axis, const model::ModelConfig& base, const TrainConfig& tcfg,
                           const DatasetManifest& manifest, const std::function<void(const std::string&)>& progress) {
  const std::size_t scale = base.task == model::Task::sr ? base.scale : 1;
  const auto train_pairs = load_pairs(manifest, "train", base.task, scale, tcfg.noise_sigma);
  const auto test_pairs = load_pairs(manifest, "test", base.task, scale, tcfg.noise_sigma);
  if (test_pairs.empty()) throw EmptyInputError("test partition is empty");
  const auto mc = metric_for(base.task, scale);

  AblationTable table;
  table.axis = axis;
  for (const auto& v : ablation_variants(axis, base)) {
    if (progress) progress(v.label);
    TrainResult r;
    auto m = train_on(tcfg, v.config, train_pairs, {}, r);
    AblationRow row{v.label, m->parameter_count(), r.final_loss, 0, 0};
    for (const auto& p : test_pairs) {
      const Image out = restore(*m, p.input);
      row.psnr += psnr(p.target, out, mc);
      row.ssim += ssim(p.target, out, mc);
    }
    row.psnr /= static_cast<double>(test_pairs.size());
    row.ssim /= static_cast<double>(test_pairs.size());
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Correlation

std::string CorrelationResult::to_json() const {
  json j;
  j["pearson_complexity"] = pearson_complexity;
  j["pearson_bpp"] = pearson_bpp;
  j["used"] = used;
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"name", r.name}, {"complexity", r.complexity}, {"bpp", r.bpp}, {"psnr", number_or_inf(r.psnr)}});
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

CorrelationResult correlate(const std::vector<std::pair<std::string, Image>>& images, std::size_t scale,
                            model::Model<float>* restorer, const GlcmConfig& glcm_cfg) {
  if (images.size() < 3) throw EmptyInputError("correlation needs at least 3 images, got " + std::to_string(images.size()));
  if (restorer != nullptr && (restorer->config().task != model::Task::sr || restorer->config().scale != scale)) {
    throw ConfigError("restorer checkpoint is not an x" + std::to_string(scale) + " SR model");
  }
  const auto mc = sr_metric_config(scale);
  CorrelationResult res;
  std::vector<double> cx, bp, ps;
  for (const auto& [name, img] : images) {
    const Image hr = modcrop(img, scale);
    const Image lr = quantize_u8(bicubic_resize(hr, 1, scale));
    const Image out = restorer != nullptr ? restore(*restorer, lr) : quantize_u8(bicubic_resize(lr, scale, 1));
    CorrelationRow row{name, complexity(hr, glcm_cfg), png_bpp(hr), psnr(hr, out, mc)};
    if (std::isfinite(row.psnr)) {
      cx.push_back(row.complexity);
      bp.push_back(row.bpp);
      ps.push_back(row.psnr);
    }
    res.rows.push_back(row);
  }
  res.used = ps.size();
  if (res.used < 3) {
    throw EmptyInputError("correlation needs at least 3 imperfectly restored images, got " + std::to_string(res.used));
  }
  res.pearson_complexity = pearson(cx, ps);
  res.pearson_bpp = pearson(bp, ps);
  return res;
}

CorrelationResult correlate(const DatasetManifest& manifest, std::size_t scale, model::Model<float>* restorer,
                            const GlcmConfig& glcm_cfg) {
  std::vector<std::pair<std::string, Image>> images;
  for (const auto& r : manifest.records) images.emplace_back(r.path, read_png(manifest.source_file(r.path)));
  return correlate(images, scale, restorer, glcm_cfg);
}

// ---------------------------------------------------------------------------
// Kernel benchmark

std::vector<KernelTiming> bench_kernel(const std::vector<std::size_t>& lengths, std::size_t channels,
                                       std::size_t repeats, bool with_oracle, std::uint64_t seed) {
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  NoGradGuard guard;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto params = wkv::WkvParams<double>::init(channels, false);
  std::vector<std::size_t> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());

  auto median_ms = [&](auto&& fn) {
    std::vector<double> t;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
    return t[t.size() / 2];
  };

  std::vector<KernelTiming> out;
  for (std::size_t len : sorted) {
    std::vector<double> kd(len * channels), vd(len * channels);
    for (auto& x : kd) x = dist(rng);
    for (auto& x : vd) x = dist(rng);
    const auto k = Tensor<double>::from_data({len, channels}, kd);
    const auto v = Tensor<double>::from_data({len, channels}, vd);
    KernelTiming row{len, 0, -1};
    row.scan_ms = median_ms([&] { (void)wkv::biwkv_scan(k, v, params); });
    if (with_oracle) row.oracle_ms = median_ms([&] { (void)wkv::biwkv_oracle(k, v, params); });
    out.push_back(row);
  }
  return out;
}

std::string kernel_timings_csv(const std::vector<KernelTiming>& rows) {
  std::ostringstream os;
  os << "T,scan_ms,oracle_ms\n";
  for (const auto& r : rows) {
    os << r.length << "," << fmt(r.scan_ms, 4) << "," << (r.oracle_ms < 0 ? std::string() : fmt(r.oracle_ms, 4))
       << "\n";
  }
  return os.str();
}

}  // namespace rwkvir::train
