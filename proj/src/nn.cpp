#include "rawpc/nn.hpp"

#include <cmath>

#include "rawpc/error.hpp"

namespace rawpc {

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void init_uniform(Tensor& t, Rng& rng, double bound) {
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

Conv1dLayer::Conv1dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
                         std::size_t dilation_, std::size_t padding_, bool with_bias, Rng& rng)
    : weight(Tensor::zeros({out, in, kernel}, true)), stride(stride_), dilation(dilation_), padding(padding_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  init_uniform(weight, rng, bound);
  if (with_bias) {
    bias = Tensor::zeros({out}, true);
    init_uniform(bias, rng, bound);
  }
}

void Conv1dLayer::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", weight);
  if (bias.defined()) out.add(prefix + ".bias", bias);
}

BatchNorm1d::BatchNorm1d(std::size_t channels, bool affine, double momentum_, double eps_)
    : state(channels), momentum(momentum_), eps(eps_) {
  if (affine) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
  }
}

void BatchNorm1d::collect(const std::string& prefix, ParamSet& out) {
  if (gamma.defined()) out.add(prefix + ".gamma", gamma);
  if (beta.defined()) out.add(prefix + ".beta", beta);
  out.add_buffer(prefix + ".running_mean", state.running_mean);
  out.add_buffer(prefix + ".running_var", state.running_var);
}

Linear::Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng) : weight(Tensor::zeros({out, in}, true)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(weight, rng, bound);
  if (with_bias) {
    bias = Tensor::zeros({out}, true);
    init_uniform(bias, rng, bound);
  }
}

void Linear::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", weight);
  if (bias.defined()) out.add(prefix + ".bias", bias);
}

GruLayer::GruLayer(std::size_t input, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto make = [&](Shape s) {
    Tensor t = Tensor::zeros(std::move(s), true);
    init_uniform(t, rng, bound);
    return t;
  };
  w_ir = make({hidden, input});
  w_iz = make({hidden, input});
  w_in = make({hidden, input});
  w_hr = make({hidden, hidden});
  w_hz = make({hidden, hidden});
  w_hn = make({hidden, hidden});
  b_ir = make({hidden});
  b_iz = make({hidden});
  b_in = make({hidden});
  b_hr = make({hidden});
  b_hz = make({hidden});
  b_hn = make({hidden});
}

void GruLayer::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".w_ir", w_ir);
  out.add(prefix + ".w_iz", w_iz);
  out.add(prefix + ".w_in", w_in);
  out.add(prefix + ".w_hr", w_hr);
  out.add(prefix + ".w_hz", w_hz);
  out.add(prefix + ".w_hn", w_hn);
  out.add(prefix + ".b_ir", b_ir);
  out.add(prefix + ".b_iz", b_iz);
  out.add(prefix + ".b_in", b_in);
  out.add(prefix + ".b_hr", b_hr);
  out.add(prefix + ".b_hz", b_hz);
  out.add(prefix + ".b_hn", b_hn);
}

Tensor gru_cell(const GruLayer& l, const Tensor& x, const Tensor& h) {
  using namespace ops;
  const Tensor r = sigmoid(add(linear(x, l.w_ir, l.b_ir), linear(h, l.w_hr, l.b_hr)));
  const Tensor z = sigmoid(add(linear(x, l.w_iz, l.b_iz), linear(h, l.w_hz, l.b_hz)));
  const Tensor n = ops::tanh(add(linear(x, l.w_in, l.b_in), mul(r, linear(h, l.w_hn, l.b_hn))));
  return add(n, mul(z, sub(h, n)));
}

Tensor gru_forward(std::span<const Tensor> seq, std::span<const GruLayer> layers) {
  if (seq.empty()) throw ShapeError("gru_forward: empty sequence");
  if (layers.empty()) throw ShapeError("gru_forward: no layers");
  const std::size_t batch = seq[0].dim(0);
  std::vector<Tensor> current(seq.begin(), seq.end());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const GruLayer& layer = layers[li];
    if (current[0].dim(1) != layer.input()) {
      throw ShapeError("gru_forward: layer " + std::to_string(li) + " expects input dim " +
                       std::to_string(layer.input()) + ", got " + std::to_string(current[0].dim(1)));
    }
    Tensor h = Tensor::zeros({batch, layer.hidden()});
    std::vector<Tensor> next;
    next.reserve(current.size());
    for (const Tensor& x : current) {
      h = gru_cell(layer, x, h);
      next.push_back(h);
    }
    current = std::move(next);
  }
  return current.back();
}

Gru::Gru(std::size_t input, std::size_t hidden, std::size_t num_layers, Rng& rng) {
  for (std::size_t i = 0; i < num_layers; ++i) layers.emplace_back(i == 0 ? input : hidden, hidden, rng);
}

Tensor Gru::forward_frames(const Tensor& x) const {
  if (x.rank() != 3) throw ShapeError("Gru::forward_frames: expected [B, D, T]");
  std::vector<Tensor> seq;
  seq.reserve(x.dim(2));
  for (std::size_t t = 0; t < x.dim(2); ++t) seq.push_back(ops::time_step(x, t));
  return forward(seq);
}

void Gru::collect(const std::string& prefix, ParamSet& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

}  // namespace rawpc
