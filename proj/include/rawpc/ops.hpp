#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rawpc/tensor.hpp"

// Differentiable primitives. Every function records its backward on the
// current tape when an input requires a gradient. Layout conventions:
// sequences are [batch, channels, length]; matrices are [rows, cols].
namespace rawpc::ops {

/// floor((L + 2p - (k-1)d - 1)/s) + 1; throws if the dilated kernel does not fit.
std::size_t conv1d_out_len(std::size_t length, std::size_t kernel, std::size_t stride,
                           std::size_t dilation, std::size_t padding);

/// x[B,Cin,L] * w[Cout,Cin,k] (+ bias[Cout]) with zero padding. `bias` may be undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride = 1,
              std::size_t dilation = 1, std::size_t padding = 0);

/// Window maximum. Padded positions never win; backward routes to the first
/// maximal element of each window.
Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding = 0);

/// Window mean over the valid (non-padded) elements only.
Tensor avgpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding = 0);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalisation over (batch, length). Training mode uses batch
/// statistics and folds them into `state` with `momentum` (running variance is
/// the unbiased estimate); eval mode reads `state`. `gamma`/`beta` may be
/// undefined for a non-affine layer.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   bool training, double momentum = 0.1, double eps = 1e-5);

/// y = x for x >= 0, slope*x otherwise. The derivative at 0 is 1.
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// x[B,D] w[Dout,D] -> x w^T + b. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);

Tensor softmax(const Tensor& v);
/// Row-wise softmax of a [R,C] matrix.
Tensor softmax_rows(const Tensor& m);

/// sum_o weights[offset + o] * xs[o]; accumulation runs in index order.
Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights, std::size_t offset);

Tensor concat_channels(std::span<const Tensor> xs);
/// Gathers channels `idx` of x[B,C,L] into [B,|idx|,L].
Tensor select_channels(const Tensor& x, std::span<const std::size_t> idx);
/// Copy of x[B,C,L] whose channels `idx` are replaced by y[B,|idx|,L].
Tensor merge_channels(const Tensor& x, const Tensor& y, std::span<const std::size_t> idx);
/// Zeroes the slice [begin, begin+count) along axis 0.
Tensor zero_leading_slices(const Tensor& x, std::size_t begin, std::size_t count);

/// First `length` frames of x[B,C,L].
Tensor crop_time(const Tensor& x, std::size_t length);
/// Frame t of x[B,C,L] as [B,C].
Tensor time_step(const Tensor& x, std::size_t t);

/// cos[b,k] = <e_b, w_k> / (max(|e_b|,eps) max(|w_k|,eps)) for e[B,D], w[K,D].
Tensor cosine_rows(const Tensor& e, const Tensor& w, double eps = 1e-12);

/// mean((pred - target)^2) over all elements; returns shape [1].
Tensor mse_loss(const Tensor& pred, std::span<const double> target);

}  // namespace rawpc::ops
