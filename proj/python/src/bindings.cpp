// Python bindings for the rwkvir core library.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rwkvir/checkpoint.hpp"
#include "rwkvir/curation.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/glcm.hpp"
#include "rwkvir/metrics.hpp"
#include "rwkvir/model.hpp"
#include "rwkvir/train.hpp"
#include "rwkvir/wkv.hpp"

namespace py = pybind11;
using namespace rwkvir;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) array -> Image
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("expected an (H, W) or (H, W, C) array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  const auto c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  Image img(w, h, c);
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::array to_array(const Image& img, bool as_u8) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)};
  if (img.channels != 1) shape.push_back(static_cast<py::ssize_t>(img.channels));
  if (as_u8) {
    py::array_t<std::uint8_t> out(shape);
    auto* p = out.mutable_data();
    for (std::size_t i = 0; i < img.data.size(); ++i) p[i] = static_cast<std::uint8_t>(std::lround(img.data[i]));
    return out;
  }
  py::array_t<double> out(shape);
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

GlcmConfig glcm_config(int levels, std::vector<std::pair<int, int>> offsets, bool symmetric) {
  GlcmConfig cfg;
  cfg.levels = levels;
  cfg.offsets = std::move(offsets);
  cfg.symmetric = symmetric;
  return cfg;
}

MetricConfig metric_config(std::size_t border, bool y_channel) {
  MetricConfig mc;
  mc.border_crop = border;
  mc.y_channel = y_channel;
  return mc;
}

Tensor<double> matrix(const Array& a, const char* name) {
  if (a.ndim() != 2) throw DimensionError(std::string(name) + " must be a (T, C) array");
  return Tensor<double>::from_data({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                                   std::vector<double>(a.data(), a.data() + a.size()));
}

wkv::WkvParams<double> params(const Array& w, const Array& u) {
  if (w.ndim() != 1 || u.ndim() != 1) throw DimensionError("w and u must be 1-D");
  const auto c = static_cast<std::size_t>(w.shape(0));
  return {Tensor<double>::from_data({c}, std::vector<double>(w.data(), w.data() + w.size())),
          Tensor<double>::from_data({static_cast<std::size_t>(u.shape(0))},
                                    std::vector<double>(u.data(), u.data() + u.size()))};
}

py::array tensor_array(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

using Wkv = Tensor<double> (*)(const Tensor<double>&, const Tensor<double>&, const wkv::WkvParams<double>&);

py::array run_wkv(Wkv fn, const Array& k, const Array& v, const Array& w, const Array& u) {
  NoGradGuard ng;
  return tensor_array(fn(matrix(k, "k"), matrix(v, "v"), params(w, u)));
}

class PyModel {
 public:
  explicit PyModel(std::unique_ptr<model::Model<float>> m) : m_(std::move(m)) {}
  py::array restore(const Array& img) { return to_array(train::restore(*m_, to_image(img)), true); }
  std::string config() const { return m_->config().to_json(); }
  std::size_t parameter_count() const { return m_->parameter_count(); }

 private:
  std::unique_ptr<model::Model<float>> m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Image restoration with bidirectional WKV mixing";

  auto base = py::register_exception<Error>(m, "RwkvirError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UndefinedCorrelationError>(m, "UndefinedCorrelationError", base.ptr());
  py::register_exception<InfeasibleSelectionError>(m, "InfeasibleSelectionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  const std::vector<std::pair<int, int>> default_offsets{{0, 1}, {1, 0}};

  m.def(
      "complexity",
      [](const Array& img, int levels, std::vector<std::pair<int, int>> offsets, bool symmetric) {
        return complexity(to_image(img), glcm_config(levels, std::move(offsets), symmetric));
      },
      py::arg("image"), py::arg("levels") = 64, py::arg("offsets") = default_offsets, py::arg("symmetric") = true,
      "ENT - ENE + DISS of the gray-level co-occurrence matrix; -1 for a constant image.");
  m.def(
      "glcm_stats",
      [](const Array& img, int levels, std::vector<std::pair<int, int>> offsets, bool symmetric) {
        const auto s = image_glcm_stats(to_image(img), glcm_config(levels, std::move(offsets), symmetric));
        py::dict d;
        d["ent"] = s.ent;
        d["ene"] = s.ene;
        d["diss"] = s.diss;
        return d;
      },
      py::arg("image"), py::arg("levels") = 64, py::arg("offsets") = default_offsets, py::arg("symmetric") = true);
  m.def("png_bpp", [](const Array& img) { return png_bpp(to_image(img)); }, py::arg("image"));

  m.def(
      "psnr",
      [](const Array& ref, const Array& test, std::size_t border, bool y_channel) {
        return psnr(to_image(ref), to_image(test), metric_config(border, y_channel));
      },
      py::arg("ref"), py::arg("test"), py::arg("border") = 0, py::arg("y_channel") = false,
      "PSNR in dB on the 0..255 scale; inf for identical inputs.");
  m.def(
      "ssim",
      [](const Array& ref, const Array& test, std::size_t border, bool y_channel) {
        return ssim(to_image(ref), to_image(test), metric_config(border, y_channel));
      },
      py::arg("ref"), py::arg("test"), py::arg("border") = 0, py::arg("y_channel") = false);
  m.def(
      "pearson",
      [](const std::vector<double>& xs, const std::vector<double>& ys) { return pearson(xs, ys); }, py::arg("xs"),
      py::arg("ys"));

  m.def(
      "biwkv",
      [](const Array& k, const Array& v, const Array& w, const Array& u) {
        return run_wkv(&wkv::biwkv_scan<double>, k, v, w, u);
      },
      py::arg("k"), py::arg("v"), py::arg("w"), py::arg("u"), "Linear-time bidirectional WKV over a (T, C) sequence.");
  m.def(
      "biwkv_reference",
      [](const Array& k, const Array& v, const Array& w, const Array& u) {
        return run_wkv(&wkv::biwkv_oracle<double>, k, v, w, u);
      },
      py::arg("k"), py::arg("v"), py::arg("w"), py::arg("u"), "Quadratic-time direct evaluation of the same sum.");

  m.def(
      "bicubic_resize", [](const Array& img, std::size_t num, std::size_t den) {
        return to_array(bicubic_resize(to_image(img), num, den), false);
      },
      py::arg("image"), py::arg("num"), py::arg("den"), "Resize by num/den; one of them must be 1.");
  m.def(
      "synth_corpus",
      [](std::uint64_t seed, std::size_t n, std::size_t size) {
        py::list out;
        for (const auto& img : synth_corpus(seed, n, size)) out.append(to_array(img, true));
        return out;
      },
      py::arg("seed"), py::arg("n"), py::arg("size") = 96);

  m.def("benchmark_presets_json", &train::benchmark_presets_json);

  py::class_<PyModel>(m, "Model")
      .def("restore", &PyModel::restore, py::arg("image"), "Restore an (H, W, 3) 0..255 image; returns uint8.")
      .def_property_readonly("config_json", &PyModel::config)
      .def_property_readonly("parameter_count", &PyModel::parameter_count);
  m.def(
      "load_checkpoint",
      [](const std::string& path) { return PyModel(checkpoint::load_model<float>(path)); }, py::arg("path"));
  m.def(
      "build_model",
      [](const std::string& preset, std::uint64_t seed) {
        return PyModel(model::build_model<float>(model::preset(preset), seed));
      },
      py::arg("preset") = "toy", py::arg("seed") = 0, "Freshly initialized model from a named preset.");
}
