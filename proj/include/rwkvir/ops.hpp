#pragma once

// Differentiable tensor ops. Spatial ops use NCHW layout ([B, C, H, W]).
// All ops are instantiated for float and double.

#include <cstddef>
#include <vector>

#include "rwkvir/tensor.hpp"

namespace rwkvir::ops {

// Elementwise, same shape.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
/// a * s where s is a one-element tensor (learnable scalar).
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s);

// Activations.
/// Exact GeLU: x * Phi(x) with the erf-based Gaussian CDF.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);

// Reductions to a scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// Cross-correlation with zero padding and unit stride.
/// x [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] or undefined.
/// Output [B,Cout,H+2p-kh+1,W+2p-kw+1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t padding);

/// Per-channel convolution. x [B,C,H,W], kernel [C,kh,kw], bias [C] or undefined.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           std::size_t padding);

/// Pointwise linear map over the channel axis of NCHW, no bias.
/// weight [Cout, Cin].
template <typename T>
Tensor<T> channel_linear(const Tensor<T>& x, const Tensor<T>& weight);

/// Layer normalization over one axis (default: trailing). gamma/beta have the
/// extent of that axis. Variance is the biased (population) estimate.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                     int axis = -1);

/// [B, C*s*s, H, W] -> [B, C, H*s, W*s]; out[b,c,h*s+i,w*s+j] = x[b, c*s*s + i*s + j, h, w].
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s);
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s);

/// out.flat[o] = x.flat[index[o]]; gradients scatter-add back. Used for
/// reindexing (scan-order flattening, shuffles).
template <typename T> Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::size_t> index);

/// Mean over H and W: [B,C,H,W] -> [B,C,1,1].
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);
/// x [B,C,H,W] scaled per (b,c) by s [B,C,1,1].
template <typename T> Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& s);
/// x [B,C,H,W] plus a per-channel constant vector (not learnable).
template <typename T> Tensor<T> add_channel_constant(const Tensor<T>& x, std::span<const T> values);

/// Quarter-channel token shift over the four axis neighbours at distance p,
/// zero padded, returning x + (1 + mu) * x'. mu is a one-element tensor.
/// Channel quarters read from (h-p,w), (h+p,w), (h,w-p), (h,w+p) in that order.
template <typename T> Tensor<T> q_shift(const Tensor<T>& x, const Tensor<T>& mu, std::size_t p);

/// Mean absolute error and mean squared error.
template <typename T> Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);
template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace rwkvir::ops
