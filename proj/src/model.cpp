#include "rawpc/model.hpp"

#include <algorithm>
#include <cmath>

#include "rawpc/error.hpp"
#include "rawpc/ops.hpp"

namespace rawpc {

void ModelConfig::validate() const {
  if (channels == 0) throw ConfigError("channels must be positive");
  if (classes != 2) throw ConfigError("classes must be 2");
  if (gru_hidden == 0 || gru_layers == 0 || embedding_dim == 0) throw ConfigError("GRU and embedding sizes must be positive");
  if (frontend.channels == 0) throw ConfigError("frontend channels must be positive");
  if (max_masked_filters > frontend.channels) throw ConfigError("max_masked_filters exceeds the frontend channel count");
  for (std::size_t p : expand_positions)
    if (p >= cells) throw ConfigError("expand position " + std::to_string(p) + " is outside [0, cells)");
  for (std::size_t i = 1; i < expand_positions.size(); ++i)
    if (expand_positions[i] <= expand_positions[i - 1]) throw ConfigError("expand positions must be strictly increasing");
  if (k_c == 0 || channels % k_c != 0) throw ConfigError("channels must be divisible by k_c");
}

std::vector<CellSpec> ModelConfig::cell_specs() const {
  std::vector<CellSpec> specs;
  std::size_t c_pp = frontend.channels, c_p = channels, c = channels;
  for (std::size_t k = 0; k < cells; ++k) {
    const bool expand = std::find(expand_positions.begin(), expand_positions.end(), k) != expand_positions.end();
    if (expand) c *= 2;
    specs.push_back({expand ? CellKind::expand : CellKind::normal, c_pp, c_p, c});
    c_pp = c_p;
    c_p = 4 * c;
  }
  return specs;
}

ShapeTrace expected_shapes(const ModelConfig& cfg) {
  cfg.validate();
  ShapeTrace t;
  const std::size_t conv = ops::conv1d_out_len(cfg.input_length, cfg.frontend.kernel_len, 1, 1, 0);
  if (conv < 3) throw ShapeError("input too short for the frontend");
  std::size_t len = (conv - 3) / 3 + 1;
  t.emplace_back("frontend", Shape{1, cfg.frontend.channels, len});
  len = ops::conv1d_out_len(len, 3, 2, 1, 0);
  t.emplace_back("conv1", Shape{1, cfg.channels, len});
  std::size_t width = cfg.channels;
  for (const auto& spec : cfg.cell_specs()) {
    len /= 2;
    if (len == 0) throw ShapeError("input too short for the number of cells");
    width = 4 * spec.c_cell;
    t.emplace_back(std::string(cell_kind_name(spec.kind)) + "_cell", Shape{1, width, len});
  }
  t.emplace_back("gru", Shape{1, cfg.gru_hidden});
  t.emplace_back("embedding", Shape{1, cfg.embedding_dim});
  t.emplace_back("cos", Shape{1, cfg.classes});
  return t;
}

void Model::build_common(Rng& rng) {
  cfg_.validate();
  FrontendConfig fc = cfg_.frontend;
  fc.leaky_slope = cfg_.leaky_slope;
  frontend_ = Frontend(fc, rng);
  conv1_ = Conv1dLayer(cfg_.frontend.channels, cfg_.channels, 3, 2, 1, 0, false, rng);
  bn1_ = BatchNorm1d(cfg_.channels, true);
}

void Model::build_tail(Rng& rng) {
  const std::size_t width = cells_.empty() ? cfg_.channels : cells_.back().out_channels();
  gru_ = Gru(width, cfg_.gru_hidden, cfg_.gru_layers, rng);
  fc_ = Linear(cfg_.gru_hidden, cfg_.embedding_dim, true, rng);
  head_ = Tensor::zeros({cfg_.classes, cfg_.embedding_dim}, true);
  init_uniform(head_, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.embedding_dim)));
}

Model Model::search(const ModelConfig& cfg, Rng& rng) {
  Model m;
  m.cfg_ = cfg;
  m.search_ = true;
  m.build_common(rng);
  for (const auto& spec : cfg.cell_specs()) m.cells_.emplace_back(spec, cfg.k_c, cfg.leaky_slope, rng);
  m.build_tail(rng);
  m.alpha_normal = Tensor::zeros({kCellEdges, kNumOps}, true);
  m.alpha_expand = Tensor::zeros({kCellEdges, kNumOps}, true);
  for (double& v : m.alpha_normal.data()) v = rng.normal(0.0, 1e-3);
  for (double& v : m.alpha_expand.data()) v = rng.normal(0.0, 1e-3);
  return m;
}

Model Model::discrete(const ModelConfig& cfg, const Genotype& genotype, Rng& rng) {
  Model m;
  m.cfg_ = cfg;
  m.cfg_.k_c = genotype.k_c == 0 ? cfg.k_c : genotype.k_c;
  m.search_ = false;
  m.genotype_ = genotype;
  m.build_common(rng);
  for (const auto& spec : cfg.cell_specs())
    m.cells_.emplace_back(spec, genotype.cell(spec.kind), cfg.leaky_slope, rng);
  m.build_tail(rng);
  return m;
}

ModelOutput Model::forward(const Tensor& wave, bool training, Rng* rng, ShapeTrace* trace) {
  if (training && rng == nullptr) throw ShapeError("training forward needs a random stream");
  if (wave.rank() != 3 || wave.dim(1) != 1) throw ShapeError("expected waveform batch [B, 1, L], got " + shape_str(wave.shape()));
  std::optional<FilterMask> mask;
  if (training) mask = sample_mask(*rng, cfg_.frontend.channels, cfg_.max_masked_filters);

  Tensor s0 = frontend_.forward(wave, mask, training);
  if (trace) trace->emplace_back("frontend", s0.shape());
  Tensor s1 = ops::leaky_relu(bn1_.forward(conv1_.forward(s0), training), cfg_.leaky_slope);
  if (trace) trace->emplace_back("conv1", s1.shape());

  Tensor w_normal, w_expand;
  if (search_) {
    w_normal = ops::softmax_rows(alpha_normal);
    w_expand = ops::softmax_rows(alpha_expand);
  }
  for (auto& cell : cells_) {
    Tensor out;
    if (search_) {
      std::vector<ChannelMask> masks;
      if (training) {
        masks = sample_channel_masks(*rng, cell.spec().c_cell, cell.k_c(), kCellEdges);
      } else {
        masks.assign(kCellEdges, leading_channel_mask(cell.spec().c_cell, cell.k_c()));
      }
      const Tensor& w = cell.spec().kind == CellKind::normal ? w_normal : w_expand;
      out = cell.forward_search(s0, s1, w, masks, training);
    } else {
      out = cell.forward_discrete(s0, s1, training);
    }
    if (trace) trace->emplace_back(std::string(cell_kind_name(cell.spec().kind)) + "_cell", out.shape());
    s0 = s1;
    s1 = out;
  }

  Tensor h = gru_.forward_frames(s1);
  if (trace) trace->emplace_back("gru", h.shape());
  ModelOutput result;
  result.embedding = fc_.forward(h);
  if (trace) trace->emplace_back("embedding", result.embedding.shape());
  result.cos = ops::cosine_rows(result.embedding, head_);
  if (trace) trace->emplace_back("cos", result.cos.shape());
  return result;
}

ParamSet Model::network_params() {
  ParamSet all = state();
  ParamSet out;
  for (auto& [name, t] : all.params)
    if (name.rfind("alpha.", 0) != 0) out.add(name, t);
  return out;
}

ParamSet Model::filter_params() {
  ParamSet out;
  frontend_.collect_filters("frontend", out);
  out.buffers.clear();
  return out;
}

std::vector<Tensor> Model::arch_params() const {
  if (!search_) return {};
  return {alpha_normal, alpha_expand};
}

ParamSet Model::state() {
  ParamSet out;
  frontend_.collect("frontend", out);
  conv1_.collect("stem.conv", out);
  bn1_.collect("stem.bn", out);
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].collect("cell" + std::to_string(i), out);
  gru_.collect("gru", out);
  fc_.collect("fc", out);
  out.add("head.weight", head_);
  if (search_) {
    out.add("alpha.normal", alpha_normal);
    out.add("alpha.expand", alpha_expand);
  }
  return out;
}

ParamCount Model::count_params() {
  ParamCount c;
  {
    ParamSet p;
    frontend_.collect("frontend", p);
    c.frontend = p.numel();
  }
  {
    ParamSet p;
    conv1_.collect("stem.conv", p);
    bn1_.collect("stem.bn", p);
    c.stem = p.numel();
  }
  {
    ParamSet p;
    for (auto& cell : cells_) cell.collect("cell", p);
    c.cells = p.numel();
  }
  {
    ParamSet p;
    gru_.collect("gru", p);
    c.gru = p.numel();
  }
  {
    ParamSet p;
    fc_.collect("fc", p);
    c.fc_head = p.numel() + head_.numel();
  }
  c.total = c.frontend + c.stem + c.cells + c.gru + c.fc_head;
  return c;
}

void Model::freeze_frontend_filters() {
  for (Tensor t : frontend_.filter_params()) {
    t.set_requires_grad(false);
    t.zero_grad();
  }
}

Tensor p2sgrad_loss(const Tensor& cos, std::span<const int> labels) {
  if (cos.rank() != 2 || cos.dim(1) != 2 || cos.dim(0) != labels.size()) {
    throw ShapeError("p2sgrad_loss: expected cos [B, 2] matching " + std::to_string(labels.size()) + " labels, got " +
                     shape_str(cos.shape()));
  }
  std::vector<double> target(cos.numel(), 0.0);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] != kBonafide && labels[b] != kSpoof) {
      throw ShapeError("p2sgrad_loss: label " + std::to_string(labels[b]) + " is not 0 or 1");
    }
    target[2 * b + static_cast<std::size_t>(labels[b])] = 1.0;
  }
  return ops::mse_loss(cos, target);
}

std::vector<double> scores_from_cos(const Tensor& cos) {
  std::vector<double> s(cos.dim(0));
  for (std::size_t b = 0; b < s.size(); ++b) s[b] = cos[2 * b];
  return s;
}

std::size_t count_correct(const Tensor& cos, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const int pred = cos[2 * b] > cos[2 * b + 1] ? kBonafide : kSpoof;
    if (pred == labels[b]) ++correct;
  }
  return correct;
}

}  // namespace rawpc
