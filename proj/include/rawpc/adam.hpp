#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rawpc/tensor.hpp"

namespace rawpc {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Classic L2 penalty: weight_decay * param is added to the gradient.
  double weight_decay = 0.0;
};

/// Per-parameter moment accumulators, shape-congruent with their parameter.
struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const Tensor> params, AdamHyper hyper);
};

/// One bias-corrected Adam update. A parameter without an accumulated
/// gradient is treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace rawpc
