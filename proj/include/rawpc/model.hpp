#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rawpc/frontend.hpp"
#include "rawpc/genotype.hpp"
#include "rawpc/nn.hpp"
#include "rawpc/rng.hpp"
#include "rawpc/search_cells.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc {

inline constexpr int kBonafide = 0;
inline constexpr int kSpoof = 1;

struct ModelConfig {
  FrontendConfig frontend;
  std::size_t input_length = 64000;
  std::size_t channels = 64;  ///< C: stem width and first node width
  std::size_t cells = 8;
  std::vector<std::size_t> expand_positions{2, 5};
  std::size_t gru_hidden = 1024;
  std::size_t gru_layers = 3;
  std::size_t embedding_dim = 1024;
  std::size_t classes = 2;
  double leaky_slope = 0.3;
  std::size_t k_c = 2;
  /// F: at most F - 1 contiguous filters are masked per training pass.
  std::size_t max_masked_filters = 16;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  std::vector<CellSpec> cell_specs() const;
};

using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

/// Stage output shapes for a batch of one, derived from the configuration.
ShapeTrace expected_shapes(const ModelConfig& cfg);

struct ParamCount {
  std::size_t frontend = 0;  ///< learnable filters plus the frontend BN
  std::size_t stem = 0;      ///< Conv_1 and its BN
  std::size_t cells = 0;
  std::size_t gru = 0;
  std::size_t fc_head = 0;
  std::size_t total = 0;
};

struct ModelOutput {
  Tensor embedding;  ///< [B, D]
  Tensor cos;        ///< [B, 2]
};

/// frontend -> Conv_1 -> cells -> GRU -> FC -> cosine head.
///
/// A search model carries mixed cells and the two architecture tables
/// (normal, expand), each [14, 8]; a discrete model is built from a genotype.
class Model {
 public:
  static Model search(const ModelConfig& cfg, Rng& rng);
  static Model discrete(const ModelConfig& cfg, const Genotype& genotype, Rng& rng);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  bool is_search() const { return search_; }
  const std::optional<Genotype>& genotype() const { return genotype_; }
  Frontend& frontend() { return frontend_; }
  const Frontend& frontend() const { return frontend_; }

  /// wave [B, 1, L]. Training passes draw the filter mask and then one
  /// channel mask per edge, cell by cell, from `rng`; eval passes draw
  /// nothing and use the leading channels. `trace` receives stage shapes.
  ModelOutput forward(const Tensor& wave, bool training, Rng* rng = nullptr, ShapeTrace* trace = nullptr);

  Tensor alpha_normal;
  Tensor alpha_expand;

  /// Every learnable tensor except the architecture tables.
  ParamSet network_params();
  /// Learnable frontend filters (empty for a fixed sinc bank).
  ParamSet filter_params();
  std::vector<Tensor> arch_params() const;
  /// Learnable tensors, architecture tables and BN/filter buffers, by name.
  ParamSet state();

  ParamCount count_params();
  /// Stops gradients to the frontend filters.
  void freeze_frontend_filters();

 private:
  Model() = default;
  void build_common(Rng& rng);
  void build_tail(Rng& rng);

  ModelConfig cfg_;
  bool search_ = false;
  std::optional<Genotype> genotype_;
  Frontend frontend_;
  Conv1dLayer conv1_;
  BatchNorm1d bn1_;
  std::vector<Cell> cells_;
  Gru gru_;
  Linear fc_;
  Tensor head_;  // [classes, D], no bias
};

/// mean over batch and classes of (cos - onehot(label))^2.
Tensor p2sgrad_loss(const Tensor& cos, std::span<const int> labels);
/// Bona fide cosine per row.
std::vector<double> scores_from_cos(const Tensor& cos);
/// Bona fide predicted iff cos[b,0] > cos[b,1].
std::size_t count_correct(const Tensor& cos, std::span<const int> labels);

}  // namespace rawpc
