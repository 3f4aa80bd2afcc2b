#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rawpc/ops.hpp"
#include "rawpc/rng.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc {

/// Named views of a module tree: learnable tensors and non-learnable buffers
/// (batch-norm running statistics). Names are dotted paths, stable across runs.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, std::span<double>>> buffers;

  void add(std::string name, const Tensor& t) { params.emplace_back(std::move(name), t); }
  void add_buffer(std::string name, std::span<double> b) { buffers.emplace_back(std::move(name), b); }
  std::vector<Tensor> tensors() const;
  std::size_t numel() const;
};

/// Fills `t` with U(-bound, bound) from `rng`, in storage order.
void init_uniform(Tensor& t, Rng& rng, double bound);

class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t dilation,
              std::size_t padding, bool bias, Rng& rng);

  Tensor forward(const Tensor& x) const { return ops::conv1d(x, weight, bias, stride, dilation, padding); }
  void collect(const std::string& prefix, ParamSet& out);

  Tensor weight;
  Tensor bias;
  std::size_t stride = 1, dilation = 1, padding = 0;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::size_t channels, bool affine, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool training) {
    return ops::batchnorm1d(x, gamma, beta, state, training, momentum, eps);
  }
  void collect(const std::string& prefix, ParamSet& out);

  Tensor gamma;
  Tensor beta;
  ops::BatchNormState state;
  double momentum = 0.1;
  double eps = 1e-5;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);

  Tensor forward(const Tensor& x) const { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamSet& out);

  Tensor weight;
  Tensor bias;
};

/// One GRU layer: separate input-hidden and hidden-hidden weights and biases
/// for each of the reset (r), update (z) and candidate (n) gates.
struct GruLayer {
  Tensor w_ir, w_iz, w_in;
  Tensor w_hr, w_hz, w_hn;
  Tensor b_ir, b_iz, b_in;
  Tensor b_hr, b_hz, b_hn;

  GruLayer() = default;
  GruLayer(std::size_t input, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return w_hr.dim(0); }
  std::size_t input() const { return w_ir.dim(1); }
  void collect(const std::string& prefix, ParamSet& out);
};

/// h' = n + z*(h - n) with
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r*(W_hn h + b_hn))
Tensor gru_cell(const GruLayer& layer, const Tensor& x, const Tensor& h);

/// Runs a stacked GRU over `seq` (each element [B, Din]) from a zero state and
/// returns the final hidden state of the top layer.
Tensor gru_forward(std::span<const Tensor> seq, std::span<const GruLayer> layers);

class Gru {
 public:
  Gru() = default;
  Gru(std::size_t input, std::size_t hidden, std::size_t num_layers, Rng& rng);

  Tensor forward(std::span<const Tensor> seq) const { return gru_forward(seq, layers); }
  /// Treats x[B, D, T] as T frames of D features.
  Tensor forward_frames(const Tensor& x) const;
  void collect(const std::string& prefix, ParamSet& out);

  std::vector<GruLayer> layers;
};

/// 3(H*Din + H*H) + 6H.
constexpr std::size_t gru_layer_param_count(std::size_t input, std::size_t hidden) {
  return 3 * (hidden * input + hidden * hidden) + 6 * hidden;
}

}  // namespace rawpc
