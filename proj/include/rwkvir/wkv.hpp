#pragma once

// Bidirectional WKV attention.
//
// For one channel with decay w, bonus u and sequence length T:
//
//   wkv_t = ( sum_{i != t} e^{-(|t-i|-1) w / T + k_i} v_i + e^{u + k_t} v_t )
//         / ( sum_{i != t} e^{-(|t-i|-1) w / T + k_i}     + e^{u + k_t}     )
//
// i.e. a positive, normalized weighting of the values, so every output lies
// in [min v, max v]. The oracle evaluates the double sum directly; the scan
// runs two recurrences (left-to-right and right-to-left) with per-step decay
// lambda = e^{-w/T} after shifting every exponent by max_i k_i.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rwkvir/tensor.hpp"

namespace rwkvir::wkv {

enum class ScanOrder { horizontal, vertical };

std::string to_string(ScanOrder order);
ScanOrder scan_order_from_string(const std::string& name);

/// Per-channel decay (w) and current-token bonus (u), both shape [C].
template <typename T>
struct WkvParams {
  Tensor<T> w;
  Tensor<T> u;

  /// w linearly spaced over [0.3, 1.3] across channels, u = 0.
  static WkvParams init(std::size_t channels, bool requires_grad = true);
};

// ---------------------------------------------------------------------------
// Single-sequence kernels on contiguous arrays (one channel).

/// O(T) forward. k, v, out have length T.
template <typename T>
void scan_forward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<T> out);

/// O(T) backward given the forward output y and upstream gradient gy.
/// Accumulates into gk, gv, and returns (dL/dw, dL/du) through gw, gu.
template <typename T>
void scan_backward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<const T> y,
                   std::span<const T> gy, std::span<T> gk, std::span<T> gv, T& gw, T& gu);

/// O(T^2) direct evaluation with log-sum-exp per output.
template <typename T>
void oracle_forward(std::span<const T> k, std::span<const T> v, T w, T u, std::span<T> out);

// ---------------------------------------------------------------------------
// Sequence-level API on [T, C] tensors.

/// Direct quadratic evaluation. Values only (no graph). Throws NumericError on
/// non-finite input.
template <typename T>
Tensor<T> biwkv_oracle(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p);

/// Linear-time evaluation; differentiable w.r.t. k, v, w and u.
template <typename T>
Tensor<T> biwkv_scan(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p);

/// [H, W, C] -> [T, C]. Horizontal: t = h*W + w. Vertical: t = w*H + h.
template <typename T>
Tensor<T> flatten_scan(const Tensor<T>& x, ScanOrder order);
/// Inverse of flatten_scan for a grid of the given height and width.
template <typename T>
Tensor<T> unflatten_scan(const Tensor<T>& seq, std::size_t height, std::size_t width, ScanOrder order);

enum class CrossCombine { mean, sum };

/// Horizontal-scan Bi-WKV (parameters p_h) combined with vertical-scan Bi-WKV
/// (parameters p_v) on shared [H, W, C] keys/values. Differentiable.
template <typename T>
Tensor<T> cross_biwkv(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p_h, const WkvParams<T>& p_v,
                      CrossCombine combine = CrossCombine::mean);

/// Bi-WKV over one scan order of an [H, W, C] grid. Differentiable.
template <typename T>
Tensor<T> biwkv_grid(const Tensor<T>& k, const Tensor<T>& v, const WkvParams<T>& p, ScanOrder order);

// ---------------------------------------------------------------------------
// Model-facing op on NCHW feature maps.

/// Applies Bi-WKV independently per (batch, channel) over the H*W sequence in
/// the given scan order. k, v [B, C, H, W]; w, u [C]. Differentiable.
template <typename T>
Tensor<T> biwkv_nchw(const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& w, const Tensor<T>& u,
                     ScanOrder order);

}  // namespace rwkvir::wkv
