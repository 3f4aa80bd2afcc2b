#include "rawpc/search_cells.hpp"

#include <algorithm>
#include <numeric>

#include "rawpc/error.hpp"
#include "rawpc/ops.hpp"

namespace rawpc {

namespace {

void check_k_c(std::size_t channels, std::size_t k_c) {
  if (k_c == 0 || channels % k_c != 0) {
    throw ShapeError("channel count " + std::to_string(channels) + " is not divisible by K_C=" +
                     std::to_string(k_c));
  }
}

struct ConvGeometry {
  std::size_t kernel, dilation, padding;
};

ConvGeometry conv_geometry(OpKind kind) {
  switch (kind) {
    case OpKind::conv3: return {3, 1, 1};
    case OpKind::conv5: return {5, 1, 2};
    case OpKind::dilconv3: return {3, 2, 2};
    case OpKind::dilconv5: return {5, 2, 4};
    default: return {0, 0, 0};
  }
}

bool is_conv(OpKind kind) { return conv_geometry(kind).kernel != 0; }
bool is_pool(OpKind kind) { return kind == OpKind::maxpool3 || kind == OpKind::avgpool3; }

}  // namespace

std::vector<ChannelMask> sample_channel_masks(Rng& rng, std::size_t channels, std::size_t k_c,
                                              std::size_t edges) {
  check_k_c(channels, k_c);
  const std::size_t keep = channels / k_c;
  std::vector<ChannelMask> masks(edges);
  std::vector<std::size_t> perm(channels);
  for (auto& mask : masks) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (keep < channels) {
      for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(channels - i));
        std::swap(perm[i], perm[j]);
      }
    }
    mask.idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(mask.idx.begin(), mask.idx.end());
  }
  return masks;
}

ChannelMask leading_channel_mask(std::size_t channels, std::size_t k_c) {
  check_k_c(channels, k_c);
  ChannelMask m;
  m.idx.resize(channels / k_c);
  std::iota(m.idx.begin(), m.idx.end(), std::size_t{0});
  return m;
}

CandidateOp::CandidateOp(OpKind kind, std::size_t channels, bool affine, double leaky_slope, Rng& rng)
    : kind_(kind), channels_(channels), slope_(leaky_slope) {
  if (is_conv(kind)) {
    const auto g = conv_geometry(kind);
    conv = Conv1dLayer(channels, channels, g.kernel, 1, g.dilation, g.padding, false, rng);
  }
  if (is_conv(kind) || is_pool(kind)) bn = BatchNorm1d(channels, affine);
}

void CandidateOp::collect(const std::string& prefix, ParamSet& out) {
  if (conv.weight.defined()) conv.collect(prefix + ".conv", out);
  if (is_conv(kind_) || is_pool(kind_)) bn.collect(prefix + ".bn", out);
}

Tensor candidate_forward(CandidateOp& op, const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != op.channels_) {
    throw ShapeError("candidate " + std::string(op_name(op.kind_)) + " expects " + std::to_string(op.channels_) +
                     " channels, got input " + shape_str(x.shape()));
  }
  switch (op.kind_) {
    case OpKind::none: return Tensor::zeros(x.shape());
    case OpKind::skip: return x;
    case OpKind::maxpool3: return op.bn.forward(ops::maxpool1d(x, 3, 1, 1), training);
    case OpKind::avgpool3: return op.bn.forward(ops::avgpool1d(x, 3, 1, 1), training);
    default: return op.bn.forward(op.conv.forward(ops::leaky_relu(x, op.slope_)), training);
  }
}

Tensor mixed_edge_forward(const Tensor& x, const Tensor& weights, std::size_t offset, const ChannelMask& mask,
                          MixedOps& ops_, bool training) {
  const std::size_t channels = x.dim(1);
  const bool full = mask.idx.size() == channels;
  if (channels % mask.idx.size() != 0) {
    throw ShapeError("channel count " + std::to_string(channels) + " is not divisible by the mask width");
  }
  const Tensor sel = full ? x : ops::select_channels(x, mask.idx);
  std::array<Tensor, kNumOps> outs;
  for (std::size_t o = 0; o < kNumOps; ++o) outs[o] = candidate_forward(ops_[o], sel, training);
  Tensor mixed = ops::weighted_sum(outs, weights, offset);
  return full ? mixed : ops::merge_channels(x, mixed, mask.idx);
}

Tensor node_forward(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw ShapeError("node_forward: no inputs");
  Tensor acc = inputs[0];
  for (std::size_t i = 1; i < inputs.size(); ++i) acc = ops::add(acc, inputs[i]);
  return acc;
}

std::size_t preprocess_stride(std::size_t len_prev_prev, std::size_t len_prev) {
  if (len_prev_prev == len_prev) return 1;
  if (len_prev_prev >= 2 * len_prev && len_prev_prev <= 2 * len_prev + 2) return 2;
  throw ShapeError("cell inputs have incompatible lengths " + std::to_string(len_prev_prev) + " and " +
                   std::to_string(len_prev));
}

Preprocess::Preprocess(std::size_t in, std::size_t out, double leaky_slope, Rng& rng)
    : conv(in, out, 1, 1, 1, 0, false, rng), bn(out, true), slope(leaky_slope) {}

Tensor Preprocess::forward(const Tensor& x, std::size_t stride, std::size_t length, bool training) {
  Tensor y = ops::conv1d(ops::leaky_relu(x, slope), conv.weight, conv.bias, stride, 1, 0);
  if (y.dim(2) != length) y = ops::crop_time(y, length);
  return bn.forward(y, training);
}

void Preprocess::collect(const std::string& prefix, ParamSet& out) {
  conv.collect(prefix + ".conv", out);
  bn.collect(prefix + ".bn", out);
}

Cell::Cell(const CellSpec& spec, std::size_t k_c, double leaky_slope, Rng& rng)
    : spec_(spec), search_(true), k_c_(k_c) {
  check_k_c(spec.c_cell, k_c);
  pre0_ = Preprocess(spec.c_prev_prev, spec.c_cell, leaky_slope, rng);
  pre1_ = Preprocess(spec.c_prev, spec.c_cell, leaky_slope, rng);
  const std::size_t width = spec.c_cell / k_c;
  edges_.resize(kCellEdges);
  for (auto& edge : edges_)
    for (std::size_t o = 0; o < kNumOps; ++o)
      edge[o] = CandidateOp(static_cast<OpKind>(o), width, false, leaky_slope, rng);
}

Cell::Cell(const CellSpec& spec, const CellGenotype& genotype, double leaky_slope, Rng& rng)
    : spec_(spec), search_(false), genotype_(genotype) {
  validate(genotype);
  pre0_ = Preprocess(spec.c_prev_prev, spec.c_cell, leaky_slope, rng);
  pre1_ = Preprocess(spec.c_prev, spec.c_cell, leaky_slope, rng);
  for (const auto& node : genotype.nodes)
    for (const auto& e : node) discrete_ops_.emplace_back(e.op, spec.c_cell, true, leaky_slope, rng);
}

std::pair<Tensor, Tensor> Cell::preprocess(const Tensor& s0, const Tensor& s1, bool training) {
  if (s0.rank() != 3 || s1.rank() != 3 || s0.dim(0) != s1.dim(0)) {
    throw ShapeError("cell inputs " + shape_str(s0.shape()) + " and " + shape_str(s1.shape()) + " do not match");
  }
  const std::size_t len = s1.dim(2);
  const std::size_t stride = preprocess_stride(s0.dim(2), len);
  return {pre0_.forward(s0, stride, len, training), pre1_.forward(s1, 1, len, training)};
}

Tensor Cell::finish(std::span<const Tensor> intermediates) {
  Tensor cat = ops::concat_channels(intermediates);
  return ops::maxpool1d(cat, 2, 2, 0);
}

Tensor Cell::forward_search(const Tensor& s0, const Tensor& s1, const Tensor& weights,
                            std::span<const ChannelMask> masks, bool training) {
  if (!search_) throw ShapeError("forward_search called on a discrete cell");
  if (masks.size() != kCellEdges) throw ShapeError("expected 14 channel masks");
  if (weights.numel() != kCellEdges * kNumOps) throw ShapeError("expected a [14, 8] weight table");
  auto [p0, p1] = preprocess(s0, s1, training);
  std::vector<Tensor> states{p0, p1};
  for (std::size_t m = 0; m < kIntermediateNodes; ++m) {
    std::vector<Tensor> incoming;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const std::size_t e = edge_index(m, i);
      incoming.push_back(mixed_edge_forward(states[i], weights, e * kNumOps, masks[e], edges_[e], training));
    }
    states.push_back(node_forward(incoming));
  }
  return finish(std::span<const Tensor>(states).subspan(2));
}

Tensor Cell::forward_discrete(const Tensor& s0, const Tensor& s1, bool training) {
  if (search_) throw ShapeError("forward_discrete called on a search cell");
  auto [p0, p1] = preprocess(s0, s1, training);
  std::vector<Tensor> states{p0, p1};
  for (std::size_t m = 0; m < kIntermediateNodes; ++m) {
    std::array<Tensor, 2> incoming;
    for (std::size_t k = 0; k < 2; ++k)
      incoming[k] = candidate_forward(discrete_ops_[2 * m + k], states[genotype_.nodes[m][k].input], training);
    states.push_back(node_forward(incoming));
  }
  return finish(std::span<const Tensor>(states).subspan(2));
}

void Cell::collect(const std::string& prefix, ParamSet& out) {
  pre0_.collect(prefix + ".pre0", out);
  pre1_.collect(prefix + ".pre1", out);
  if (search_) {
    for (std::size_t e = 0; e < edges_.size(); ++e)
      for (std::size_t o = 0; o < kNumOps; ++o)
        edges_[e][o].collect(prefix + ".edge" + std::to_string(e) + "." + std::string(op_name(edges_[e][o].kind())),
                             out);
  } else {
    for (std::size_t i = 0; i < discrete_ops_.size(); ++i)
      discrete_ops_[i].collect(prefix + ".op" + std::to_string(i), out);
  }
}

}  // namespace rawpc
