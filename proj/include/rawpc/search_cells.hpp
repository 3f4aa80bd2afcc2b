#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rawpc/genotype.hpp"
#include "rawpc/nn.hpp"
#include "rawpc/rng.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc {

/// Sorted indices of the channels routed through a mixed edge.
struct ChannelMask {
  std::vector<std::size_t> idx;
  bool operator==(const ChannelMask&) const = default;
};

/// One mask per edge, each with channels / k_c entries drawn without
/// replacement. A full mask (k_c == 1) consumes no draws.
std::vector<ChannelMask> sample_channel_masks(Rng& rng, std::size_t channels, std::size_t k_c,
                                              std::size_t edges);
/// The first channels / k_c channels; used for deterministic evaluation.
ChannelMask leading_channel_mask(std::size_t channels, std::size_t k_c);

/// A single candidate operation at a fixed channel width. Convolutions are
/// LeakyReLU -> conv (no bias) -> BN, pools are followed by BN.
class CandidateOp {
 public:
  CandidateOp() = default;
  CandidateOp(OpKind kind, std::size_t channels, bool affine, double leaky_slope, Rng& rng);

  OpKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }
  void collect(const std::string& prefix, ParamSet& out);

  Conv1dLayer conv;
  BatchNorm1d bn;

 private:
  friend Tensor candidate_forward(CandidateOp& op, const Tensor& x, bool training);
  OpKind kind_ = OpKind::none;
  std::size_t channels_ = 0;
  double slope_ = 0.3;
};

/// Length-preserving application of `op` to x[B,C,L].
Tensor candidate_forward(CandidateOp& op, const Tensor& x, bool training);

/// All eight candidates of one searchable edge.
using MixedOps = std::array<CandidateOp, kNumOps>;

/// Partial-channel mixed edge: channels in `mask` go through
/// sum_o weights[offset + o] * op_o(x_sel); the others pass through unchanged.
Tensor mixed_edge_forward(const Tensor& x, const Tensor& weights, std::size_t offset, const ChannelMask& mask,
                          MixedOps& ops, bool training);

/// Elementwise sum of the incoming edge outputs, left to right.
Tensor node_forward(std::span<const Tensor> inputs);

struct CellSpec {
  CellKind kind = CellKind::normal;
  std::size_t c_prev_prev = 0;
  std::size_t c_prev = 0;
  std::size_t c_cell = 0;  ///< node width; output is 4 * c_cell channels
};

/// Stride applied to the older input so both inputs share the newer one's
/// length: 1 for equal lengths, 2 when the older one is 2L to 2L + 2 long.
std::size_t preprocess_stride(std::size_t len_prev_prev, std::size_t len_prev);

/// LeakyReLU -> 1x1 conv -> BN, optionally strided and cropped to `length`.
struct Preprocess {
  Conv1dLayer conv;
  BatchNorm1d bn;
  double slope = 0.3;

  Preprocess() = default;
  Preprocess(std::size_t in, std::size_t out, double leaky_slope, Rng& rng);
  Tensor forward(const Tensor& x, std::size_t stride, std::size_t length, bool training);
  void collect(const std::string& prefix, ParamSet& out);
};

/// A normal or expand cell, either as a search supernet (every edge mixed)
/// or as a discrete cell built from a genotype. Output: [B, 4 c_cell, L/2].
class Cell {
 public:
  Cell() = default;
  /// Search supernet; candidates are built at width c_cell / k_c with non-affine BN.
  Cell(const CellSpec& spec, std::size_t k_c, double leaky_slope, Rng& rng);
  /// Discrete cell; candidates use affine BN at full width.
  Cell(const CellSpec& spec, const CellGenotype& genotype, double leaky_slope, Rng& rng);

  const CellSpec& spec() const { return spec_; }
  bool is_search() const { return search_; }
  std::size_t k_c() const { return k_c_; }
  std::size_t out_channels() const { return 4 * spec_.c_cell; }

  /// weights: softmax of the cell kind's architecture table, [14, 8].
  Tensor forward_search(const Tensor& s0, const Tensor& s1, const Tensor& weights,
                        std::span<const ChannelMask> masks, bool training);
  Tensor forward_discrete(const Tensor& s0, const Tensor& s1, bool training);

  void collect(const std::string& prefix, ParamSet& out);

 private:
  std::pair<Tensor, Tensor> preprocess(const Tensor& s0, const Tensor& s1, bool training);
  static Tensor finish(std::span<const Tensor> intermediates);

  CellSpec spec_;
  bool search_ = false;
  std::size_t k_c_ = 1;
  Preprocess pre0_, pre1_;
  std::vector<MixedOps> edges_;                       // search: 14 edges
  CellGenotype genotype_;                             // discrete
  std::vector<CandidateOp> discrete_ops_;             // discrete: 2 per node
};

}  // namespace rawpc
