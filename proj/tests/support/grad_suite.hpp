#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rawpc/rng.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc::testing {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline constexpr double kRelFloor = 1e-3;

using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of sum(f(inputs) * P), P a fixed random
/// projection, with central differences on every input element.
double grad_check(const GradFn& f, std::vector<Tensor> inputs, Rng& rng, double eps = 1e-5);

struct GradCase {
  std::string primitive;
  std::size_t shapes = 0;
  double max_rel_error = 0.0;
  std::string worst_shape;
};

/// Runs every primitive over `shapes` random configurations.
std::vector<GradCase> run_gradient_suite(std::uint64_t seed, std::size_t shapes);

}  // namespace rawpc::testing
