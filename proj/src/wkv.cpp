#include "rwkvir/wkv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rwkvir/ops.hpp"

namespace rwkvir::wkv {

std::string to_string(ScanOrder order) { return order == ScanOrder::horizontal ? "horizontal" : "vertical"; }

ScanOrder scan_order_from_string(const std::string& name) {
  if (name == "horizontal") return ScanOrder::horizontal;
  if (name == "vertical") return ScanOrder::vertical;
  throw ConfigError("unknown scan order '" + name + "' (expected horizontal|vertical)");
}

template <typename T>
WkvParams<T> WkvParams<T>::init(std::size_t channels, bool requires_grad) {
  std::vector<T> w(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    w[c] = channels == 1 ? T(0.3) : T(0.3 + 1.0 * double(c) / double(channels - 1));
  }
  return {Tensor<T>::from_data({channels}, std::move(w), requires_grad),
          Tensor<T>::zeros({channels}, requires_grad)};
}

namespace {

template <typename T>
T max_of(std::span<const T> k) {
  T m = -std::numeric_limits<T>::infinity();
  for (T x : k) m = std::max(m, x);
  return m;
}

// Self-term exponent split so neither factor overflows: the neighbour sums are
// multiplied by `scale` and the self weight is `self`.
template <typename T>
struct SelfTerm {
  T scale;
  T self;
};

template <typename T>
SelfTerm<T> self_term(T u, T k, T m) {
  const T s = u + k - m;
  const T shift = std::max(T(0), s);
  return {std::exp(-shift), std::exp(s - shift)};
}

}  // namespace

template <typename T>
void scan_forward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<T> out) {
  const std::size_t n = k.size();
  if (n == 0) return;
  const T m = max_of(k);
  const T lambda = std::exp(-w / T(n));
  std::vector<T> ek(n), right_num(n), right_den(n);
  for (std::size_t i = 0; i < n; ++i) ek[i] = std::exp(k[i] - m);
  T num = 0, den = 0;
  for (std::size_t t = n; t-- > 0;) {
    right_num[t] = num;
    right_den[t] = den;
    num = lambda * num + ek[t] * v[t];
    den = lambda * den + ek[t];
  }
  num = 0;
  den = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto st = self_term(u, k[t], m);
    const T top = (num + right_num[t]) * st.scale + st.self * v[t];
    const T bottom = (den + right_den[t]) * st.scale + st.self;
    out[t] = top / bottom;
    num = lambda * num + ek[t] * v[t];
    den = lambda * den + ek[t];
  }
}

template <typename T>
void scan_backward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<const T> y,
                   std::span<const T> gy, std::span<T> gk, std::span<T> gv, T& gw, T& gu) {
  const std::size_t n = k.size();
  gw = 0;
  gu = 0;
  if (n == 0) return;
  const T m = max_of(k);
  const T lambda = std::exp(-w / T(n));
  const T dlambda = -lambda / T(n);

  // Right-to-left states and their w-derivatives, stored per position.
  std::vector<T> ek(n), rn(n), rd(n), drn(n), drd(n);
  for (std::size_t i = 0; i < n; ++i) ek[i] = std::exp(k[i] - m);
  {
    T num = 0, den = 0, dnum = 0, dden = 0;
    for (std::size_t t = n; t-- > 0;) {
      rn[t] = num;
      rd[t] = den;
      drn[t] = dnum;
      drd[t] = dden;
      dnum = lambda * dnum + dlambda * num;
      dden = lambda * dden + dlambda * den;
      num = lambda * num + ek[t] * v[t];
      den = lambda * den + ek[t];
    }
  }

  // Left-to-right: denominators, g_t, dL/dw and dL/du.
  std::vector<T> g(n), self(n), bottom(n);
  {
    T num = 0, den = 0, dnum = 0, dden = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const auto st = self_term(u, k[t], m);
      bottom[t] = (den + rd[t]) * st.scale + st.self;
      self[t] = st.self;
      g[t] = gy[t] * st.scale / bottom[t];
      gw += g[t] * ((dnum + drn[t]) - y[t] * (dden + drd[t]));
      gu += gy[t] * st.self * (v[t] - y[t]) / bottom[t];
      dnum = lambda * dnum + dlambda * num;
      dden = lambda * dden + dlambda * den;
      num = lambda * num + ek[t] * v[t];
      den = lambda * den + ek[t];
    }
  }

  // G_j = sum_{t != j} D(|t-j|) g_t and Hs_j = sum_{t != j} D(|t-j|) g_t y_t.
  std::vector<T> G(n, T(0)), Hs(n, T(0));
  {
    T a = 0, b = 0;
    for (std::size_t j = 0; j < n; ++j) {
      G[j] += a;
      Hs[j] += b;
      a = lambda * a + g[j];
      b = lambda * b + g[j] * y[j];
    }
    a = 0;
    b = 0;
    for (std::size_t j = n; j-- > 0;) {
      G[j] += a;
      Hs[j] += b;
      a = lambda * a + g[j];
      b = lambda * b + g[j] * y[j];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const T own = gy[j] * self[j] / bottom[j];
    gv[j] += ek[j] * G[j] + own;
    gk[j] += ek[j] * (v[j] * G[j] - Hs[j]) + own * (v[j] - y[j]);
  }
}

template <typename T>
void oracle_forward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<T> out) {
  const std::size_t n = k.size();
  std::vector<T> logit(n);
  const T step = w / T(n);
  for (std::size_t t = 0; t < n; ++t) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const T dist = T(i > t ? i - t : t - i);
      logit[i] = i == t ? u + k[t] : -(dist - T(1)) * step + k[i];
      mx = std::max(mx, logit[i]);
    }
    T num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T e = std::exp(logit[i] - mx);
      num += e * v[i];
      den += e;
    }
    out[t] = num / den;
  }
}

// ---------------------------------------------------------------------------

namespace {

// A batch of independent sequences laid out inside a flat buffer:
// element t of sequence s lives at base[s] + offset[t]; its channel is channel[s].
struct SeqLayout {
  std::size_t len = 0;
  std::vector<std::size_t> base;
  std::vector<std::size_t> channel;
  std::vector<std::size_t> offset;
};

template <typename T>
void require_finite(std::span<const T> xs, const char* what) {
  for (T x : xs)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
}

template <typename T>
Tensor<T> biwkv_layout(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w, const Tensor<T>& u,
                       SeqLayout layout) {
  if (k.shape() != v.shape()) throw DimensionError("biwkv: k and v shapes differ");
  require_finite(k.data(), "biwkv k");
  require_finite(v.data(), "biwkv v");
  require_finite(w.data(), "biwkv w");
  require_finite(u.data(), "biwkv u");
  const std::size_t nseq = layout.base.size(), len = layout.len;
  std::vector<T> out(k.numel());
  const T* kv = k.data().data();
  const T* vv = v.data().data();
#pragma omp parallel for schedule(static)
  for (std::size_t s = 0; s < nseq; ++s) {
    std::vector<T> ks(len), vs(len), ys(len);
    for (std::size_t t = 0; t < len; ++t) {
      ks[t] = kv[layout.base[s] + layout.offset[t]];
      vs[t] = vv[layout.base[s] + layout.offset[t]];
    }
    const std::size_t c = layout.channel[s];
    scan_forward<T>(ks, vs, w[c], u[c], ys);
    for (std::size_t t = 0; t < len; ++t) out[layout.base[s] + layout.offset[t]] = ys[t];
  }
  auto kn = k.node(), vn = v.node(), wn = w.node(), un = u.node();
  auto lay = std::make_shared<SeqLayout>(std::move(layout));
  auto yv = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>(k.shape(), std::move(out), {k, v, w, u}, [kn, vn, wn, un, lay, yv](std::span<const T> g) {
    const std::size_t nseq = lay->base.size(), len = lay->len;
    std::vector<T> part_w(nseq), part_u(nseq);
    const bool want_k = kn->requires_grad, want_v = vn->requires_grad;
    T* gk = want_k ? kn->grad_buffer().data() : nullptr;
    T* gv = want_v ? vn->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < nseq; ++s) {
      std::vector<T> ks(len), vs(len), ys(len), gys(len), gks(len, T(0)), gvs(len, T(0));
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t idx = lay->base[s] + lay->offset[t];
        ks[t] = kn->value[idx];
        vs[t] = vn->value[idx];
        ys[t] = (*yv)[idx];
        gys[t] = g[idx];
      }
      const std::size_t c = lay->channel[s];
      scan_backward<T>(ks, vs, wn->value[c], un->value[c], ys, gys, gks, gvs, part_w[s], part_u[s]);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t idx = lay->base[s] + lay->offset[t];
        if (gk) gk[idx] += gks[t];
        if (gv) gv[idx] += gvs[t];
      }
    }
    if (wn->requires_grad) {
      auto gw = wn->grad_buffer();
      for (std::size_t s = 0; s < nseq; ++s) gw[lay->channel[s]] += part_w[s];
    }
    if (un->requires_grad) {
      auto gu = un->grad_buffer();
      for (std::size_t s = 0; s < nseq; ++s) gu[lay->channel[s]] += part_u[s];
    }
  });
}

template <typename T>
void check_params(const WkvParams<T>& p, std::size_t channels) {
  if (p.w.numel() != channels || p.u.numel() != channels) {
    throw DimensionError("WkvParams: w/u must have " + std::to_string(channels) + " entries");
  }
}

// Offset of sequence position t inside an H x W grid (row-major positions).
std::vector<std::size_t> grid_positions(std::size_t H, std::size_t W, ScanOrder order) {
  std::vector<std::size_t> pos(H * W);
  for (std::size_t t = 0; t < H * W; ++t) {
    pos[t] = order == ScanOrder::horizontal ? t : (t % H) * W + t / H;
  }
  return pos;
}

}  // namespace

template <typename T>
Tensor<T> biwkv_oracle(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p) {
  if (k.ndim() != 2 || k.shape() != v.shape()) throw DimensionError("biwkv_oracle: k, v must be [T, C] of equal shape");
  const std::size_t n = k.dim(0), C = k.dim(1);
  if (n == 0) throw DimensionError("biwkv_oracle: T must be at least 1");
  check_params(p, C);
  require_finite(k.data(), "biwkv_oracle k");
  require_finite(v.data(), "biwkv_oracle v");
  std::vector<T> out(n * C);
  std::vector<T> ks(n), vs(n), ys(n);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      ks[t] = k[t * C + c];
      vs[t] = v[t * C + c];
    }
    oracle_forward<T>(ks, vs, p.w[c], p.u[c], ys);
    for (std::size_t t = 0; t < n; ++t) out[t * C + c] = ys[t];
  }
  return Tensor<T>::from_data(k.shape(), std::move(out));
}

template <typename T>
Tensor<T> biwkv_scan(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p) {
  if (k.ndim() != 2) throw DimensionError("biwkv_scan: k must be [T, C], got " + shape_str(k.shape()));
  const std::size_t n = k.dim(0), C = k.dim(1);
  if (n == 0) throw DimensionError("biwkv_scan: T must be at least 1");
  check_params(p, C);
  SeqLayout lay;
  lay.len = n;
  for (std::size_t c = 0; c < C; ++c) {
    lay.base.push_back(c);
    lay.channel.push_back(c);
  }
  for (std::size_t t = 0; t < n; ++t) lay.offset.push_back(t * C);
  return biwkv_layout(k, v, p.w, p.u, std::move(lay));
}

template <typename T>
Tensor<T> flatten_scan(const Tensor<T>& x, ScanOrder order) {
  if (x.ndim() != 3) throw DimensionError("flatten_scan: expected [H, W, C], got " + shape_str(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  auto pos = grid_positions(H, W, order);
  std::vector<std::size_t> idx(H * W * C);
  for (std::size_t t = 0; t < H * W; ++t)
    for (std::size_t c = 0; c < C; ++c) idx[t * C + c] = pos[t] * C + c;
  return ops::gather(x, {H * W, C}, std::move(idx));
}

template <typename T>
Tensor<T> unflatten_scan(const Tensor<T>& seq, std::size_t height, std::size_t width, ScanOrder order) {
  if (seq.ndim() != 2 || seq.dim(0) != height * width) {
    throw DimensionError("unflatten_scan: sequence shape " + shape_str(seq.shape()) + " does not match grid");
  }
  const std::size_t C = seq.dim(1);
  auto pos = grid_positions(height, width, order);
  std::vector<std::size_t> idx(height * width * C);
  for (std::size_t t = 0; t < height * width; ++t)
    for (std::size_t c = 0; c < C; ++c) idx[pos[t] * C + c] = t * C + c;
  return ops::gather(seq, {height, width, C}, std::move(idx));
}

template <typename T>
Tensor<T> biwkv_grid(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p, ScanOrder order) {
  if (k.ndim() != 3 || k.shape() != v.shape()) throw DimensionError("biwkv_grid: k, v must be [H, W, C] of equal shape");
  const std::size_t H = k.dim(0), W = k.dim(1);
  auto seq = biwkv_scan(flatten_scan(k, order), flatten_scan(v, order), p);
  return unflatten_scan(seq, H, W, order);
}

template <typename T>
Tensor<T> cross_biwkv(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p_h, const WkvParams<T>& p_v,
                      CrossCombine combine) {
  auto both = ops::add(biwkv_grid(k, v, p_h, ScanOrder::horizontal), biwkv_grid(k, v, p_v, ScanOrder::vertical));
  return combine == CrossCombine::mean ? ops::scale(both, T(0.5)) : both;
}

template <typename T>
Tensor<T> biwkv_nchw(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w, const Tensor<T>& u,
                     ScanOrder order) {
  if (k.ndim() != 4) throw DimensionError("biwkv_nchw: expected [B, C, H, W], got " + shape_str(k.shape()));
  const std::size_t B = k.dim(0), C = k.dim(1), H = k.dim(2), W = k.dim(3);
  if (w.numel() != C || u.numel() != C) throw DimensionError("biwkv_nchw: w/u must have C entries");
  SeqLayout lay;
  lay.len = H * W;
  lay.offset = grid_positions(H, W, order);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      lay.base.push_back((b * C + c) * H * W);
      lay.channel.push_back(c);
    }
  return biwkv_layout(k, v, w, u, std::move(lay));
}

#define RWKVIR_INSTANTIATE_WKV(T)                                                                                   \
  template struct WkvParams<T>;                                                                                     \
  template void scan_forward(std::span<const T>, std::span<const T>, T, T, std::span<T>);                           \
  template void scan_backward(std::span<const T>, std::span<const T>, T, T, std::span<const T>, std::span<const T>, \
                              std::span<T>, std::span<T>, T&, T&);                                                  \
  template void oracle_forward(std::span<const T>, std::span<const T>, T, T, std::span<T>);                         \
  template Tensor<T> biwkv_oracle(const Tensor<T>&, const Tensor<T>&, const WkvParams<T>&);                         \
  template Tensor<T> biwkv_scan(const Tensor<T>&, const Tensor<T>&, const WkvParams<T>&);                           \
  template Tensor<T> flatten_scan(const Tensor<T>&, ScanOrder);                                                     \
  template Tensor<T> unflatten_scan(const Tensor<T>&, std::size_t, std::size_t, ScanOrder);                         \
  template Tensor<T> biwkv_grid(const Tensor<T>&, const Tensor<T>&, const WkvParams<T>&, ScanOrder);                \
  template Tensor<T> cross_biwkv(const Tensor<T>&, const Tensor<T>&, const WkvParams<T>&, const WkvParams<T>&,      \
                                 CrossCombine);                                                                     \
  template Tensor<T> biwkv_nchw(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ScanOrder);

RWKVIR_INSTANTIATE_WKV(float)
RWKVIR_INSTANTIATE_WKV(double)

}  // namespace rwkvir::wkv
