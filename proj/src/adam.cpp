#include "rawpc/adam.hpp"

#include <cmath>

#include "rawpc/error.hpp"

namespace rawpc {

AdamState AdamState::for_params(std::span<const Tensor> params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.m.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
    auto pv = p.data();
    std::span<const double> g = p.grad();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      const double gj = (g.empty() ? 0.0 : g[j]) + h.weight_decay * pv[j];
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

}  // namespace rawpc
