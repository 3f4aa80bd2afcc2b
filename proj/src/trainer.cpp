#include "rawpc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rawpc/error.hpp"
#include "rawpc/ops.hpp"

namespace rawpc {

namespace {

std::vector<double> to_doubles(std::span<const std::size_t> v) { return {v.begin(), v.end()}; }

std::vector<std::size_t> to_indices(const ArrayEntry& a) {
  std::vector<std::size_t> out;
  out.reserve(a.data.size());
  for (double d : a.data) out.push_back(static_cast<std::size_t>(d));
  return out;
}

std::vector<std::size_t> map_indices(std::span<const std::size_t> positions, std::span<const std::size_t> table) {
  std::vector<std::size_t> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(table[p]);
  return out;
}

void zero_grads(Model& model) {
  for (auto& [name, t] : model.state().params) t.zero_grad();
}

void store_history(Checkpoint& ck, const std::vector<EpochStats>& hist) {
  const std::size_t n = hist.size();
  std::vector<double> tl, vl, acc, lr;
  for (const auto& h : hist) {
    tl.push_back(h.train_loss);
    vl.push_back(h.val_loss);
    acc.push_back(h.dev_acc);
    lr.push_back(h.lr);
  }
  ck.set_array("history/train_loss", {n}, tl);
  ck.set_array("history/val_loss", {n}, vl);
  ck.set_array("history/dev_acc", {n}, acc);
  ck.set_array("history/lr", {n}, lr);
}

std::vector<EpochStats> restore_history(const Checkpoint& ck) {
  const auto& tl = ck.array("history/train_loss").data;
  const auto& vl = ck.array("history/val_loss").data;
  const auto& acc = ck.array("history/dev_acc").data;
  const auto& lr = ck.array("history/lr").data;
  std::vector<EpochStats> out;
  for (std::size_t i = 0; i < tl.size(); ++i) out.push_back({i, tl[i], vl[i], acc[i], lr[i]});
  return out;
}

void expect_kind(const Checkpoint& ck, const std::string& kind) {
  if (!ck.has("kind") || ck.text("kind") != kind) {
    throw ConfigError("expected a '" + kind + "' checkpoint, got '" + (ck.has("kind") ? ck.text("kind") : "?") + "'");
  }
}

ParamSet without(const ParamSet& all, const ParamSet& excluded) {
  ParamSet out;
  for (const auto& [name, t] : all.params) {
    const bool skip = std::any_of(excluded.params.begin(), excluded.params.end(),
                                  [&](const auto& e) { return e.first == name; });
    if (!skip) out.add(name, t);
  }
  return out;
}

double train_step(Model& model, std::span<const Utterance> data, std::span<const std::size_t> indices, Rng& rng,
                  std::span<Tensor> update, AdamState& opt) {
  zero_grads(model);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    const Batch b = make_batch(data, indices);
    const auto out = model.forward(b.wave, true, &rng);
    loss = p2sgrad_loss(out.cos, b.labels);
  }
  if (!std::isfinite(loss.item())) throw NumericError("training loss is not finite");
  tape.backward(loss);
  adam_step(update, opt);
  return loss.item();
}

}  // namespace

SearchSplit split_search_data(std::span<const int> labels, Rng& rng) {
  SearchSplit s;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(i))]);
    const std::size_t half = idx.size() / 2;
    s.w.insert(s.w.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    s.alpha.insert(s.alpha.end(), idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());
  }
  std::sort(s.w.begin(), s.w.end());
  std::sort(s.alpha.begin(), s.alpha.end());
  return s;
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr_max, double lr_min) {
  if (total <= 1) return lr_max;
  const double x = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total - 1);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(x));
}

std::size_t select_best_epoch(std::span<const double> acc) {
  if (acc.empty()) throw ConfigError("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < acc.size(); ++i)
    if (acc[i] >= acc[best]) best = i;
  return best;
}

std::string log_header() { return "epoch\ttrain_loss\tval_loss\tdev_acc\tlr\n"; }

std::string format_log_line(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.10g\t%.10g\t%.6f\t%.17g\n", s.epoch, s.train_loss, s.val_loss, s.dev_acc,
                s.lr);
  return buf;
}

EvalResult evaluate(Model& model, std::span<const Utterance> data, std::size_t batch) {
  NoGradGuard no_grad;
  EvalResult r;
  if (data.empty()) return r;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (const auto& idx : Batcher(data.size(), batch).sequential()) {
    const Batch b = make_batch(data, idx);
    const auto out = model.forward(b.wave, false);
    const double loss = p2sgrad_loss(out.cos, b.labels).item();
    if (!std::isfinite(loss)) throw NumericError("evaluation loss is not finite");
    loss_sum += loss * static_cast<double>(idx.size());
    correct += count_correct(out.cos, b.labels);
    const auto scores = scores_from_cos(out.cos);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& u = data[idx[k]];
      r.scores.push_back({u.id, u.attack_id, u.label, scores[k]});
    }
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

void store_model(Checkpoint& ck, Model& model) {
  const ParamSet s = model.state();
  for (const auto& [name, t] : s.params) ck.set_array("model/" + name, t.shape(), t.data());
  for (const auto& [name, b] : s.buffers) ck.set_array("buffer/" + name, {b.size()}, b);
}

void restore_model(const Checkpoint& ck, Model& model) {
  ParamSet s = model.state();
  for (auto& [name, t] : s.params) {
    const auto& a = ck.array("model/" + name);
    if (a.shape != t.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(a.shape) + ", model expects " +
                        shape_str(t.shape()));
    }
    std::copy(a.data.begin(), a.data.end(), t.data().begin());
  }
  for (auto& [name, b] : s.buffers) {
    const auto& a = ck.array("buffer/" + name);
    if (a.data.size() != b.size()) throw ConfigError("checkpoint buffer " + name + " has the wrong size");
    std::copy(a.data.begin(), a.data.end(), b.begin());
  }
  const std::size_t expected = s.params.size() + s.buffers.size();
  if (ck.names("model/").size() + ck.names("buffer/").size() != expected) {
    throw ConfigError("checkpoint holds tensors the model does not have");
  }
}

void store_adam(Checkpoint& ck, const std::string& prefix, const ParamSet& params, const AdamState& st) {
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    const auto& name = params.params[i].first;
    ck.set_array(prefix + "/m/" + name, {st.m[i].size()}, st.m[i]);
    ck.set_array(prefix + "/v/" + name, {st.v[i].size()}, st.v[i]);
  }
  ck.set_int(prefix + "/step", static_cast<std::int64_t>(st.step));
  const double h[5] = {st.hyper.lr, st.hyper.beta1, st.hyper.beta2, st.hyper.eps, st.hyper.weight_decay};
  ck.set_array(prefix + "/hyper", {5}, h);
}

void restore_adam(const Checkpoint& ck, const std::string& prefix, const ParamSet& params, AdamState& st) {
  st.m.clear();
  st.v.clear();
  for (const auto& [name, t] : params.params) {
    const auto& m = ck.array(prefix + "/m/" + name).data;
    const auto& v = ck.array(prefix + "/v/" + name).data;
    if (m.size() != t.numel() || v.size() != t.numel()) throw ConfigError("optimizer state mismatch for " + name);
    st.m.push_back(m);
    st.v.push_back(v);
  }
  st.step = static_cast<std::uint64_t>(ck.integer(prefix + "/step"));
  const auto& h = ck.array(prefix + "/hyper").data;
  st.hyper = {h.at(0), h.at(1), h.at(2), h.at(3), h.at(4)};
}

Checkpoint model_checkpoint(const RunConfig& cfg, Model& model) {
  if (model.is_search() || !model.genotype()) throw ConfigError("model checkpoints hold discrete models");
  Checkpoint ck;
  ck.set_text("kind", "model");
  ck.set_text("config", format_config(cfg));
  ck.set_text("genotype", format_genotype(*model.genotype()));
  store_model(ck, model);
  return ck;
}

Model load_model(const Checkpoint& ck, RunConfig* cfg_out) {
  expect_kind(ck, "model");
  const RunConfig cfg = parse_config(ck.text("config"));
  const Genotype g = parse_genotype(ck.text("genotype"));
  Rng rng(cfg.seed);
  Model m = Model::discrete(cfg.model, g, rng);
  restore_model(ck, m);
  if (cfg_out) *cfg_out = cfg;
  return m;
}

// ---------------------------------------------------------------- search

SearchRun::SearchRun(const RunConfig& cfg, std::span<const Utterance> train, std::span<const Utterance> dev)
    : cfg_(cfg), train_(train), dev_(dev), rng_(cfg.seed), model_(Model::search(cfg.model, rng_)) {
  cfg_.validate();
  std::vector<int> labels;
  for (const auto& u : train) labels.push_back(u.label);
  split_ = split_search_data(labels, rng_);
  if (split_.w.empty() || split_.alpha.empty()) throw DataError("search needs at least two utterances per split");
  net_params_ = model_.network_params();
  arch_params_ = model_.arch_params();
  w_opt_ = AdamState::for_params(net_params_.tensors(), {cfg.search.w_lr, 0.9, 0.999, 1e-8, cfg.search.w_weight_decay});
  a_opt_ = AdamState::for_params(arch_params_, {cfg.search.alpha_lr, 0.9, 0.999, 1e-8, cfg.search.alpha_weight_decay});
}

double SearchRun::step(std::span<const std::size_t> indices, bool alpha_step) {
  auto& seen = alpha_step ? audit.alpha_indices : audit.w_indices;
  seen.insert(seen.end(), indices.begin(), indices.end());
  if (alpha_step) return train_step(model_, train_, indices, rng_, arch_params_, a_opt_);
  std::vector<Tensor> params = net_params_.tensors();
  return train_step(model_, train_, indices, rng_, params, w_opt_);
}

EpochStats SearchRun::run_epoch() {
  if (done()) throw ConfigError("search already finished");
  const bool update_alpha = epoch_ >= cfg_.search.warmup_epochs;
  const auto w_batches = Batcher(split_.w.size(), cfg_.search.batch).epoch(rng_);
  std::vector<std::vector<std::size_t>> a_batches;
  if (update_alpha) a_batches = Batcher(split_.alpha.size(), cfg_.search.batch).epoch(rng_);

  double loss_sum = 0.0;
  for (std::size_t s = 0; s < w_batches.size(); ++s) {
    if (update_alpha) step(map_indices(a_batches[s % a_batches.size()], split_.alpha), true);
    loss_sum += step(map_indices(w_batches[s], split_.w), false);
  }
  zero_grads(model_);

  const EvalResult dev = evaluate(model_, dev_, cfg_.search.batch);
  EpochStats st{epoch_, loss_sum / static_cast<double>(w_batches.size()), dev.loss, dev.accuracy, w_opt_.hyper.lr};
  history_.push_back(st);
  alpha_n_hist_.emplace_back(model_.alpha_normal.data().begin(), model_.alpha_normal.data().end());
  alpha_e_hist_.emplace_back(model_.alpha_expand.data().begin(), model_.alpha_expand.data().end());
  for (const auto& a : {model_.alpha_normal, model_.alpha_expand}) a.check_finite("architecture weights");
  ++epoch_;
  return st;
}

std::size_t SearchRun::selected_epoch() const {
  std::vector<double> acc;
  for (const auto& h : history_) acc.push_back(h.dev_acc);
  return select_best_epoch(acc);
}

Genotype SearchRun::selected_genotype() const {
  const std::size_t e = selected_epoch();
  return derive_genotype(alpha_n_hist_[e], alpha_e_hist_[e], cfg_.model.k_c);
}

Checkpoint SearchRun::checkpoint() {
  Checkpoint ck;
  ck.set_text("kind", "search");
  ck.set_text("config", format_config(cfg_));
  ck.set_text("rng", rng_.state());
  ck.set_int("epoch", static_cast<std::int64_t>(epoch_));
  ck.set_array("split/w", {split_.w.size()}, to_doubles(split_.w));
  ck.set_array("split/alpha", {split_.alpha.size()}, to_doubles(split_.alpha));
  store_model(ck, model_);
  store_adam(ck, "adam_w", net_params_, w_opt_);
  ParamSet arch;
  arch.add("alpha.normal", model_.alpha_normal);
  arch.add("alpha.expand", model_.alpha_expand);
  store_adam(ck, "adam_alpha", arch, a_opt_);
  store_history(ck, history_);
  std::vector<double> an, ae;
  for (const auto& a : alpha_n_hist_) an.insert(an.end(), a.begin(), a.end());
  for (const auto& a : alpha_e_hist_) ae.insert(ae.end(), a.begin(), a.end());
  ck.set_array("history/alpha_normal", {alpha_n_hist_.size(), kCellEdges, kNumOps}, an);
  ck.set_array("history/alpha_expand", {alpha_e_hist_.size(), kCellEdges, kNumOps}, ae);
  if (!history_.empty()) ck.set_text("genotype", format_genotype(selected_genotype()));
  return ck;
}

SearchRun SearchRun::resume(const Checkpoint& ck, std::span<const Utterance> train, std::span<const Utterance> dev) {
  expect_kind(ck, "search");
  SearchRun run(parse_config(ck.text("config")), train, dev);
  run.rng_.set_state(ck.text("rng"));
  run.epoch_ = static_cast<std::size_t>(ck.integer("epoch"));
  run.split_ = {to_indices(ck.array("split/w")), to_indices(ck.array("split/alpha"))};
  restore_model(ck, run.model_);
  restore_adam(ck, "adam_w", run.net_params_, run.w_opt_);
  ParamSet arch;
  arch.add("alpha.normal", run.model_.alpha_normal);
  arch.add("alpha.expand", run.model_.alpha_expand);
  restore_adam(ck, "adam_alpha", arch, run.a_opt_);
  run.history_ = restore_history(ck);
  const std::size_t table = kCellEdges * kNumOps;
  const auto& an = ck.array("history/alpha_normal").data;
  const auto& ae = ck.array("history/alpha_expand").data;
  for (std::size_t e = 0; e < run.history_.size(); ++e) {
    run.alpha_n_hist_.emplace_back(an.begin() + static_cast<std::ptrdiff_t>(e * table),
                                   an.begin() + static_cast<std::ptrdiff_t>((e + 1) * table));
    run.alpha_e_hist_.emplace_back(ae.begin() + static_cast<std::ptrdiff_t>(e * table),
                                   ae.begin() + static_cast<std::ptrdiff_t>((e + 1) * table));
  }
  if (run.history_.size() != run.epoch_) throw ConfigError("search checkpoint history does not match its epoch");
  return run;
}

// --------------------------------------------------------------- scratch

ScratchRun::ScratchRun(const RunConfig& cfg, const Genotype& genotype, std::span<const Utterance> train,
                       std::span<const Utterance> dev, const Checkpoint* search_state)
    : cfg_(cfg),
      genotype_(genotype),
      train_(train),
      dev_(dev),
      rng_(cfg.seed),
      model_(Model::discrete(cfg.model, genotype, rng_)) {
  cfg_.validate();
  if (train.empty()) throw DataError("training set is empty");
  if (search_state) {
    for (auto& [name, t] : model_.filter_params().params) {
      const auto& a = search_state->array("model/" + name);
      if (a.shape != t.shape()) throw ConfigError("search checkpoint filter " + name + " has the wrong shape");
      std::copy(a.data.begin(), a.data.end(), t.data().begin());
    }
  }
  if (cfg.scratch.freeze_frontend) {
    model_.freeze_frontend_filters();
    params_ = without(model_.network_params(), model_.filter_params());
  } else {
    params_ = model_.network_params();
  }
  opt_ = AdamState::for_params(params_.tensors(), {cfg.scratch.lr_max, 0.9, 0.999, 1e-8, cfg.scratch.weight_decay});
}

EpochStats ScratchRun::run_epoch() {
  if (done()) throw ConfigError("training already finished");
  opt_.hyper.lr = cosine_lr(epoch_, cfg_.scratch.epochs, cfg_.scratch.lr_max, cfg_.scratch.lr_min);
  const auto batches = Batcher(train_.size(), cfg_.scratch.batch).epoch(rng_);
  std::vector<Tensor> params = params_.tensors();
  double loss_sum = 0.0;
  for (const auto& b : batches) loss_sum += train_step(model_, train_, b, rng_, params, opt_);
  zero_grads(model_);

  const EvalResult dev = evaluate(model_, dev_, cfg_.scratch.batch);
  EpochStats st{epoch_, loss_sum / static_cast<double>(batches.size()), dev.loss, dev.accuracy, opt_.hyper.lr};
  history_.push_back(st);
  if (dev.accuracy >= best_acc_) {
    best_acc_ = dev.accuracy;
    best_epoch_ = epoch_;
    Checkpoint best = model_checkpoint(cfg_, model_);
    best.set_int("epoch", static_cast<std::int64_t>(epoch_));
    best_bytes_ = best.serialize();
  }
  ++epoch_;
  return st;
}

Checkpoint ScratchRun::best_checkpoint() const {
  if (best_bytes_.empty()) throw ConfigError("no epoch has finished yet");
  return Checkpoint::deserialize(best_bytes_);
}

Checkpoint ScratchRun::checkpoint() {
  Checkpoint ck;
  ck.set_text("kind", "train");
  ck.set_text("config", format_config(cfg_));
  ck.set_text("genotype", format_genotype(genotype_));
  ck.set_text("rng", rng_.state());
  ck.set_int("epoch", static_cast<std::int64_t>(epoch_));
  store_model(ck, model_);
  store_adam(ck, "adam", params_, opt_);
  store_history(ck, history_);
  ck.set_text("best_model", best_bytes_);
  ck.set_int("best_epoch", static_cast<std::int64_t>(best_epoch_));
  ck.set_double("best_acc", best_acc_);
  return ck;
}

ScratchRun ScratchRun::resume(const Checkpoint& ck, std::span<const Utterance> train, std::span<const Utterance> dev) {
  expect_kind(ck, "train");
  ScratchRun run(parse_config(ck.text("config")), parse_genotype(ck.text("genotype")), train, dev);
  run.rng_.set_state(ck.text("rng"));
  run.epoch_ = static_cast<std::size_t>(ck.integer("epoch"));
  restore_model(ck, run.model_);
  restore_adam(ck, "adam", run.params_, run.opt_);
  run.history_ = restore_history(ck);
  run.best_bytes_ = ck.text("best_model");
  run.best_epoch_ = static_cast<std::size_t>(ck.integer("best_epoch"));
  run.best_acc_ = ck.scalar("best_acc");
  if (run.history_.size() != run.epoch_) throw ConfigError("training checkpoint history does not match its epoch");
  return run;
}

}  // namespace rawpc
