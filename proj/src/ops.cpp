#include "rwkvir/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace rwkvir::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.ndim() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(a.shape()));
  }
}

// Elementwise unary op from value map f and derivative df(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto xn = x.node();
  auto yv = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>(x.shape(), std::move(out), {x}, [xn, yv, df](std::span<const T> g) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->value[i], (*yv)[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto an = a.node(), bn = b.node();
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](std::span<const T> g) {
    accumulate_grad(an, g);
    accumulate_grad(bn, g);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto an = a.node(), bn = b.node();
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](std::span<const T> g) {
    accumulate_grad(an, g);
    if (bn->requires_grad) {
      auto gb = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto an = a.node(), bn = b.node();
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](std::span<const T> g) {
    if (an->requires_grad) {
      auto ga = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto gb = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary(a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("mul_scalar: scale must have one element, got " + shape_str(s.shape()));
  const T sv = s[0];
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * sv;
  auto an = a.node(), sn = s.node();
  return make_op_result<T>(a.shape(), std::move(out), {a, s}, [an, sn](std::span<const T> g) {
    const T sv = sn->value[0];
    if (an->requires_grad) {
      auto ga = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
    }
    if (sn->requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * an->value[i];
      sn->grad_buffer()[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto xn = x.node();
  return make_op_result<T>({1}, {acc}, {x}, [xn](std::span<const T> g) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw EmptyInputError("mean: empty tensor");
  return scale(sum(x), T(1) / T(x.numel()));
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvGeom {
  std::size_t B, Cin, H, W, Cout, kh, kw, pad, Ho, Wo;
  std::size_t K() const { return Cin * kh * kw; }
  std::size_t P() const { return Ho * Wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (std::size_t ci = 0; ci < g.Cin; ++ci) {
    const T* xc = x + ci * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ci * g.kh + i) * g.kw + j) * g.P();
        for (std::size_t oh = 0; oh < g.Ho; ++oh) {
          const long ih = long(oh + i) - long(g.pad);
          T* dst = row + oh * g.Wo;
          if (ih < 0 || ih >= long(g.H)) {
            std::fill(dst, dst + g.Wo, T(0));
            continue;
          }
          const T* src = xc + std::size_t(ih) * g.W;
          for (std::size_t ow = 0; ow < g.Wo; ++ow) {
            const long iw = long(ow + j) - long(g.pad);
            dst[ow] = (iw < 0 || iw >= long(g.W)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
  for (std::size_t ci = 0; ci < g.Cin; ++ci) {
    T* xc = x + ci * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ci * g.kh + i) * g.kw + j) * g.P();
        for (std::size_t oh = 0; oh < g.Ho; ++oh) {
          const long ih = long(oh + i) - long(g.pad);
          if (ih < 0 || ih >= long(g.H)) continue;
          T* dst = xc + std::size_t(ih) * g.W;
          const T* src = row + oh * g.Wo;
          for (std::size_t ow = 0; ow < g.Wo; ++ow) {
            const long iw = long(ow + j) - long(g.pad);
            if (iw >= 0 && iw < long(g.W)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  ConvGeom g{};
  g.B = x.dim(0);
  g.Cin = x.dim(1);
  g.H = x.dim(2);
  g.W = x.dim(3);
  g.Cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.pad = padding;
  if (kernel.dim(1) != g.Cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                         std::to_string(g.Cin));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.Cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match Cout=" +
                         std::to_string(g.Cout));
  }
  if (g.H + 2 * g.pad < g.kh || g.W + 2 * g.pad < g.kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  g.Ho = g.H + 2 * g.pad - g.kh + 1;
  g.Wo = g.W + 2 * g.pad - g.kw + 1;

  std::vector<T> out(g.B * g.Cout * g.P());
  const T* xv = x.data().data();
  ConstMapMat<T> Wm(kernel.data().data(), g.Cout, g.K());
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < g.B; ++b) {
    MapMat<T> ob(out.data() + b * g.Cout * g.P(), g.Cout, g.P());
    if (g.pointwise()) {
      ob.noalias() = Wm * ConstMapMat<T>(xv + b * g.Cin * g.H * g.W, g.Cin, g.P());
    } else {
      std::vector<T> col(g.K() * g.P());
      im2col(xv + b * g.Cin * g.H * g.W, g, col.data());
      ob.noalias() = Wm * ConstMapMat<T>(col.data(), g.K(), g.P());
    }
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.Cout; ++co) ob.row(co).array() += bias[co];
    }
  }

  auto xn = x.node(), kn = kernel.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  auto backward_fn = [xn, kn, bn, g](std::span<const T> gout) {
    ConstMapMat<T> Wm(kn->value.data(), g.Cout, g.K());
    if (xn->requires_grad) {
      auto gx = xn->grad_buffer();
#pragma omp parallel for schedule(static)
      for (std::size_t b = 0; b < g.B; ++b) {
        ConstMapMat<T> gb(gout.data() + b * g.Cout * g.P(), g.Cout, g.P());
        if (g.pointwise()) {
          MapMat<T>(gx.data() + b * g.Cin * g.P(), g.Cin, g.P()).noalias() += Wm.transpose() * gb;
        } else {
          RowMat<T> gcol = Wm.transpose() * gb;
          col2im_add(gcol.data(), g, gx.data() + b * g.Cin * g.H * g.W);
        }
      }
    }
    if (kn->requires_grad) {
      MapMat<T> gW(kn->grad_buffer().data(), g.Cout, g.K());
      std::vector<T> col(g.pointwise() ? 0 : g.K() * g.P());
      for (std::size_t b = 0; b < g.B; ++b) {
        ConstMapMat<T> gb(gout.data() + b * g.Cout * g.P(), g.Cout, g.P());
        const T* xb = xn->value.data() + b * g.Cin * g.H * g.W;
        if (g.pointwise()) {
          gW.noalias() += gb * ConstMapMat<T>(xb, g.Cin, g.P()).transpose();
        } else {
          im2col(xb, g, col.data());
          gW.noalias() += gb * ConstMapMat<T>(col.data(), g.K(), g.P()).transpose();
        }
      }
    }
    if (bn && bn->requires_grad) {
      auto gbias = bn->grad_buffer();
      for (std::size_t b = 0; b < g.B; ++b) {
        for (std::size_t co = 0; co < g.Cout; ++co) {
          const T* src = gout.data() + (b * g.Cout + co) * g.P();
          T acc = 0;
          for (std::size_t p = 0; p < g.P(); ++p) acc += src[p];
          gbias[co] += acc;
        }
      }
    }
  };
  Shape out_shape{g.B, g.Cout, g.Ho, g.Wo};
  if (bias.defined()) return make_op_result<T>(std::move(out_shape), std::move(out), {x, kernel, bias}, backward_fn);
  return make_op_result<T>(std::move(out_shape), std::move(out), {x, kernel}, backward_fn);
}

template <typename T>
Tensor<T> channel_linear(const Tensor<T>& x, const Tensor<T>& weight) {
  require_rank(weight, 2, "channel_linear weight");
  Tensor<T> kernel = make_op_result<T>(
      {weight.dim(0), weight.dim(1), 1, 1}, std::vector<T>(weight.data().begin(), weight.data().end()), {weight},
      [wn = weight.node()](std::span<const T> g) { accumulate_grad(wn, g); });
  return conv2d(x, kernel, Tensor<T>(), 0);
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           std::size_t padding) {
  require_rank(x, 4, "depthwise_conv2d input");
  require_rank(kernel, 3, "depthwise_conv2d kernel");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t kh = kernel.dim(1), kw = kernel.dim(2);
  if (kernel.dim(0) != C) {
    throw DimensionError("depthwise_conv2d: kernel has " + std::to_string(kernel.dim(0)) + " channels, input has " +
                         std::to_string(C));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != C)) {
    throw DimensionError("depthwise_conv2d: bias shape " + shape_str(bias.shape()) + " does not match C");
  }
  if (H + 2 * padding < kh || W + 2 * padding < kw) throw DimensionError("depthwise_conv2d: kernel larger than input");
  const std::size_t Ho = H + 2 * padding - kh + 1, Wo = W + 2 * padding - kw + 1;
  const long pad = long(padding);

  std::vector<T> out(B * C * Ho * Wo);
  const T* xv = x.data().data();
  const T* kv = kernel.data().data();
#pragma omp parallel for schedule(static)
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t c = bc % C;
    const T* xc = xv + bc * H * W;
    T* oc = out.data() + bc * Ho * Wo;
    const T b0 = bias.defined() ? bias[c] : T(0);
    std::fill(oc, oc + Ho * Wo, b0);
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T kij = kv[(c * kh + i) * kw + j];
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const long ih = long(oh + i) - pad;
          if (ih < 0 || ih >= long(H)) continue;
          const T* src = xc + std::size_t(ih) * W;
          T* dst = oc + oh * Wo;
          const long ow_lo = std::max<long>(0, pad - long(j));
          const long ow_hi = std::min<long>(long(Wo), long(W) + pad - long(j));
          for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += kij * src[ow + long(j) - pad];
        }
      }
    }
  }

  auto xn = x.node(), kn = kernel.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  auto backward_fn = [xn, kn, bn, B, C, H, W, kh, kw, Ho, Wo, pad](std::span<const T> g) {
    const bool want_x = xn->requires_grad, want_k = kn->requires_grad;
    T* gx = want_x ? xn->grad_buffer().data() : nullptr;
    T* gk = want_k ? kn->grad_buffer().data() : nullptr;
    const T* kv = kn->value.data();
    const T* xv = xn->value.data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const std::size_t c = bc % C;
      const T* gc = g.data() + bc * Ho * Wo;
      for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
          const T kij = kv[(c * kh + i) * kw + j];
          T acc = 0;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            const long ih = long(oh + i) - pad;
            if (ih < 0 || ih >= long(H)) continue;
            const long ow_lo = std::max<long>(0, pad - long(j));
            const long ow_hi = std::min<long>(long(Wo), long(W) + pad - long(j));
            const T* grow = gc + oh * Wo;
            const std::size_t base = bc * H * W + std::size_t(ih) * W;
            for (long ow = ow_lo; ow < ow_hi; ++ow) {
              const std::size_t xi = base + std::size_t(ow + long(j) - pad);
              if (want_x) gx[xi] += grow[ow] * kij;
              acc += grow[ow] * xv[xi];
            }
          }
          if (want_k) gk[(c * kh + i) * kw + j] += acc;
        }
      }
      if (bn && bn->requires_grad) {
        T acc = 0;
        for (std::size_t p = 0; p < Ho * Wo; ++p) acc += gc[p];
        bn->grad_buffer()[c] += acc;
      }
    }
  };
  Shape out_shape{B, C, Ho, Wo};
  if (bias.defined()) return make_op_result<T>(std::move(out_shape), std::move(out), {x, kernel, bias}, backward_fn);
  return make_op_result<T>(std::move(out_shape), std::move(out), {x, kernel}, backward_fn);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps, int axis) {
  if (x.ndim() == 0) throw DimensionError("layer_norm: scalar input");
  const int rank = int(x.ndim());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("layer_norm: axis out of range");
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t n = x.dim(std::size_t(axis));
  if (n == 0) throw DimensionError("layer_norm: normalized axis has extent 0");
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(n) + " elements");
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(std::size_t(i));
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(std::size_t(i));

  const T* xv = x.data().data();
  std::vector<T> out(x.numel());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(outer * inner);
  const T teps = T(eps);
#pragma omp parallel for schedule(static)
  for (std::size_t o = 0; o < outer; ++o) {
    std::vector<T> mu(inner, T(0)), var(inner, T(0));
    const std::size_t base = o * n * inner;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t in = 0; in < inner; ++in) mu[in] += xv[base + j * inner + in];
    for (auto& m : mu) m /= T(n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t in = 0; in < inner; ++in) {
        const T d = xv[base + j * inner + in] - mu[in];
        var[in] += d * d;
      }
    for (std::size_t in = 0; in < inner; ++in) (*inv_std)[o * inner + in] = T(1) / std::sqrt(var[in] / T(n) + teps);
    for (std::size_t j = 0; j < n; ++j) {
      const T gj = gamma[j], bj = beta[j];
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t idx = base + j * inner + in;
        const T xh = (xv[idx] - mu[in]) * (*inv_std)[o * inner + in];
        (*xhat)[idx] = xh;
        out[idx] = gj * xh + bj;
      }
    }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat, inv_std, outer, inner, n](std::span<const T> g) {
        const auto& xh = *xhat;
        if (gn->requires_grad || bn->requires_grad) {
          auto gg = gn->requires_grad ? gn->grad_buffer() : std::span<T>();
          auto gb = bn->requires_grad ? bn->grad_buffer() : std::span<T>();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < n; ++j) {
              T sg = 0, sb = 0;
              const std::size_t base = (o * n + j) * inner;
              for (std::size_t in = 0; in < inner; ++in) {
                sg += g[base + in] * xh[base + in];
                sb += g[base + in];
              }
              if (!gg.empty()) gg[j] += sg;
              if (!gb.empty()) gb[j] += sb;
            }
        }
        if (!xn->requires_grad) return;
        auto gx = xn->grad_buffer();
        const auto& gam = gn->value;
#pragma omp parallel for schedule(static)
        for (std::size_t o = 0; o < outer; ++o) {
          std::vector<T> m1(inner, T(0)), m2(inner, T(0));
          const std::size_t base = o * n * inner;
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t in = 0; in < inner; ++in) {
              const std::size_t idx = base + j * inner + in;
              const T gh = g[idx] * gam[j];
              m1[in] += gh;
              m2[in] += gh * xh[idx];
            }
          for (std::size_t in = 0; in < inner; ++in) {
            m1[in] /= T(n);
            m2[in] /= T(n);
          }
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t in = 0; in < inner; ++in) {
              const std::size_t idx = base + j * inner + in;
              const T gh = g[idx] * gam[j];
              gx[idx] += (*inv_std)[o * inner + in] * (gh - m1[in] - xh[idx] * m2[in]);
            }
        }
      });
}

// ---------------------------------------------------------------------------

namespace {

// Index map of pixel_shuffle: output flat index -> input flat index.
std::vector<std::size_t> shuffle_index(std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t s) {
  const std::size_t Ho = H * s, Wo = W * s;
  std::vector<std::size_t> idx(B * C * Ho * Wo);
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          const std::size_t h = oh / s, i = oh % s, w = ow / s, j = ow % s;
          const std::size_t cin = c * s * s + i * s + j;
          idx[o++] = ((b * C * s * s + cin) * H + h) * W + w;
        }
  return idx;
}

template <typename T>
Tensor<T> gather_op(const Tensor<T>& x, Shape out_shape, std::vector<std::size_t> idx, bool out_to_in) {
  // out_to_in: out[o] = x[idx[o]]; otherwise out[idx[i]] = x[i].
  std::vector<T> out(x.numel());
  auto xv = x.data();
  if (out_to_in) {
    for (std::size_t o = 0; o < idx.size(); ++o) out[o] = xv[idx[o]];
  } else {
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = xv[i];
  }
  auto xn = x.node();
  auto shared_idx = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return make_op_result<T>(std::move(out_shape), std::move(out), {x}, [xn, shared_idx, out_to_in](std::span<const T> g) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    const auto& id = *shared_idx;
    if (out_to_in) {
      for (std::size_t o = 0; o < id.size(); ++o) gx[id[o]] += g[o];
    } else {
      for (std::size_t i = 0; i < id.size(); ++i) gx[i] += g[id[i]];
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s) {
  require_rank(x, 4, "pixel_shuffle");
  if (s == 0) throw ContractError("pixel_shuffle: scale must be positive");
  const std::size_t B = x.dim(0), Cs = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (Cs % (s * s) != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(Cs) + " channels not divisible by " + std::to_string(s * s));
  }
  const std::size_t C = Cs / (s * s);
  return gather_op(x, {B, C, H * s, W * s}, shuffle_index(B, C, H, W, s), true);
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s) {
  require_rank(x, 4, "pixel_unshuffle");
  if (s == 0) throw ContractError("pixel_unshuffle: scale must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), Hs = x.dim(2), Ws = x.dim(3);
  if (Hs % s != 0 || Ws % s != 0) throw DimensionError("pixel_unshuffle: spatial extent not divisible by scale");
  const std::size_t H = Hs / s, W = Ws / s;
  // shuffle_index maps shuffled positions to unshuffled ones.
  auto idx = shuffle_index(B, C, H, W, s);
  std::vector<std::size_t> inv(idx.size());
  for (std::size_t o = 0; o < idx.size(); ++o) inv[idx[o]] = o;
  return gather_op(x, {B, C * s * s, H, W}, std::move(inv), true);
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::size_t> index) {
  if (numel_of(out_shape) != index.size()) throw DimensionError("gather: index length does not match output shape");
  for (auto i : index)
    if (i >= x.numel()) throw DimensionError("gather: index out of range");
  std::vector<T> out(index.size());
  auto xv = x.data();
  for (std::size_t o = 0; o < index.size(); ++o) out[o] = xv[index[o]];
  auto xn = x.node();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(index));
  return make_op_result<T>(std::move(out_shape), std::move(out), {x}, [xn, idx](std::span<const T> g) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t o = 0; o < idx->size(); ++o) gx[(*idx)[o]] += g[o];
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t BC = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
  std::vector<T> out(BC, T(0));
  auto xv = x.data();
  for (std::size_t i = 0; i < BC; ++i) {
    T acc = 0;
    for (std::size_t p = 0; p < P; ++p) acc += xv[i * P + p];
    out[i] = acc / T(P);
  }
  auto xn = x.node();
  return make_op_result<T>({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x}, [xn, BC, P](std::span<const T> g) {
    if (!xn->requires_grad) return;
    auto gx = xn->grad_buffer();
    for (std::size_t i = 0; i < BC; ++i)
      for (std::size_t p = 0; p < P; ++p) gx[i * P + p] += g[i] / T(P);
  });
}

template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& s) {
  require_rank(x, 4, "mul_channelwise");
  const std::size_t BC = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
  if (s.numel() != BC) throw DimensionError("mul_channelwise: scale shape " + shape_str(s.shape()) + " mismatch");
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < BC; ++i)
    for (std::size_t p = 0; p < P; ++p) out[i * P + p] = xv[i * P + p] * s[i];
  auto xn = x.node(), sn = s.node();
  return make_op_result<T>(x.shape(), std::move(out), {x, s}, [xn, sn, BC, P](std::span<const T> g) {
    if (xn->requires_grad) {
      auto gx = xn->grad_buffer();
      for (std::size_t i = 0; i < BC; ++i)
        for (std::size_t p = 0; p < P; ++p) gx[i * P + p] += g[i * P + p] * sn->value[i];
    }
    if (sn->requires_grad) {
      auto gs = sn->grad_buffer();
      for (std::size_t i = 0; i < BC; ++i) {
        T acc = 0;
        for (std::size_t p = 0; p < P; ++p) acc += g[i * P + p] * xn->value[i * P + p];
        gs[i] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> add_channel_constant(const Tensor<T>& x, std::span<const T> values) {
  require_rank(x, 4, "add_channel_constant");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  if (values.size() != C) throw DimensionError("add_channel_constant: expected " + std::to_string(C) + " values");
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[(b * C + c) * P + p] += values[c];
  auto xn = x.node();
  return make_op_result<T>(x.shape(), std::move(out), {x}, [xn](std::span<const T> g) { accumulate_grad(xn, g); });
}

template <typename T>
Tensor<T> q_shift(const Tensor<T>& x, const Tensor<T>& mu, std::size_t p) {
  require_rank(x, 4, "q_shift");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C % 4 != 0) throw DimensionError("q_shift: channel count " + std::to_string(C) + " not divisible by 4");
  if (mu.numel() != 1) throw DimensionError("q_shift: mu must have one element");
  if (p == 0) return x;
  const std::size_t q = C / 4;
  const long lp = long(p);
  // For each output element, the source flat index or -1 (zero padding).
  auto src = std::make_shared<std::vector<long>>(x.numel(), -1L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t quarter = c / q;
      const long dh = quarter == 0 ? -lp : quarter == 1 ? lp : 0;
      const long dw = quarter == 2 ? -lp : quarter == 3 ? lp : 0;
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          const long sh = long(h) + dh, sw = long(w) + dw;
          if (sh < 0 || sh >= long(H) || sw < 0 || sw >= long(W)) continue;
          (*src)[((b * C + c) * H + h) * W + w] = long(((b * C + c) * H + std::size_t(sh)) * W + std::size_t(sw));
        }
    }
  const T m = mu[0];
  auto xv = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T shifted = (*src)[i] < 0 ? T(0) : xv[std::size_t((*src)[i])];
    out[i] = xv[i] + (T(1) + m) * shifted;
  }
  auto xn = x.node(), mn = mu.node();
  return make_op_result<T>(x.shape(), std::move(out), {x, mu}, [xn, mn, src](std::span<const T> g) {
    const T m = mn->value[0];
    if (xn->requires_grad) {
      auto gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i];
        if ((*src)[i] >= 0) gx[std::size_t((*src)[i])] += (T(1) + m) * g[i];
      }
    }
    if (mn->requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i)
        if ((*src)[i] >= 0) acc += g[i] * xn->value[std::size_t((*src)[i])];
      mn->grad_buffer()[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "l1_loss");
  return mean(abs(sub(pred, target)));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  return mean(square(sub(pred, target)));
}

#define RWKVIR_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                                          \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                     \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> gelu(const Tensor<T>&);                                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                           \
  template Tensor<T> exp(const Tensor<T>&);                                                               \
  template Tensor<T> square(const Tensor<T>&);                                                            \
  template Tensor<T> abs(const Tensor<T>&);                                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                               \
  template Tensor<T> mean(const Tensor<T>&);                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);           \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> channel_linear(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, int);       \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> gather(const Tensor<T>&, Shape, std::vector<std::size_t>);                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                   \
  template Tensor<T> mul_channelwise(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add_channel_constant(const Tensor<T>&, std::span<const T>);                          \
  template Tensor<T> q_shift(const Tensor<T>&, const Tensor<T>&, std::size_t);                            \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);

RWKVIR_INSTANTIATE_OPS(float)
RWKVIR_INSTANTIATE_OPS(double)

}  // namespace rwkvir::ops
