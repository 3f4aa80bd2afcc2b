#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rawpc/adam.hpp"
#include "rawpc/checkpoint.hpp"
#include "rawpc/config.hpp"
#include "rawpc/data_io.hpp"
#include "rawpc/genotype.hpp"
#include "rawpc/metrics.hpp"
#include "rawpc/model.hpp"
#include "rawpc/rng.hpp"

namespace rawpc {

/// Disjoint halves of the training set: `w` updates network weights and
/// `alpha` updates architecture weights.
struct SearchSplit {
  std::vector<std::size_t> w;
  std::vector<std::size_t> alpha;
};

/// Per class: shuffle that class's indices, send floor(n/2) to `w` and the
/// rest to `alpha`. Both lists are returned sorted.
SearchSplit split_search_data(std::span<const int> labels, Rng& rng);

/// lr_min + (lr_max - lr_min)(1 + cos(pi e / (total - 1))) / 2; lr_max when total == 1.
double cosine_lr(std::size_t epoch, std::size_t total, double lr_max, double lr_min);

/// Index of the highest accuracy; ties go to the later epoch.
std::size_t select_best_epoch(std::span<const double> accuracies);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  ///< loss on the development set, eval mode
  double dev_acc = 0.0;
  double lr = 0.0;
};

/// `epoch \t train_loss \t val_loss \t dev_acc \t lr`
std::string format_log_line(const EpochStats& s);
std::string log_header();

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<ScoreRecord> scores;
};

/// Eval-mode pass without gradients, in dataset order.
EvalResult evaluate(Model& model, std::span<const Utterance> data, std::size_t batch);

/// Writes parameters under `model/` and buffers under `buffer/`.
void store_model(Checkpoint& ck, Model& model);
/// Copies every parameter and buffer back; names and shapes must match.
void restore_model(const Checkpoint& ck, Model& model);
void store_adam(Checkpoint& ck, const std::string& prefix, const ParamSet& params, const AdamState& state);
void restore_adam(const Checkpoint& ck, const std::string& prefix, const ParamSet& params, AdamState& state);

/// A model-only checkpoint (config, genotype, weights) suitable for scoring.
Checkpoint model_checkpoint(const RunConfig& cfg, Model& model);
/// Rebuilds a discrete model from model_checkpoint() output.
Model load_model(const Checkpoint& ck, RunConfig* cfg_out = nullptr);

/// Which training-set indices each kind of step consumed.
struct DataAudit {
  std::vector<std::size_t> w_indices;
  std::vector<std::size_t> alpha_indices;
};

/// Bi-level architecture search with warm-up. One seeded stream drives, in
/// order: model initialisation, the data split, and per epoch the w-batch
/// shuffle, the alpha-batch shuffle (after warm-up) and the per-forward
/// filter and channel masks.
class SearchRun {
 public:
  SearchRun(const RunConfig& cfg, std::span<const Utterance> train, std::span<const Utterance> dev);
  static SearchRun resume(const Checkpoint& ck, std::span<const Utterance> train, std::span<const Utterance> dev);

  std::size_t epoch() const { return epoch_; }
  bool done() const { return epoch_ >= cfg_.search.epochs; }
  /// Runs the next epoch: after warm-up each step is an alpha step on an
  /// alpha-split batch followed by a w step on a w-split batch.
  EpochStats run_epoch();

  Checkpoint checkpoint();
  /// Genotype of the epoch with the best dev accuracy (ties: later epoch).
  Genotype selected_genotype() const;
  std::size_t selected_epoch() const;

  const RunConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  const SearchSplit& split() const { return split_; }
  const std::vector<EpochStats>& history() const { return history_; }
  /// Per-epoch snapshots of the [14, 8] tables, taken after each epoch.
  const std::vector<std::vector<double>>& alpha_normal_history() const { return alpha_n_hist_; }
  const std::vector<std::vector<double>>& alpha_expand_history() const { return alpha_e_hist_; }

  DataAudit audit;

 private:
  double step(std::span<const std::size_t> indices, bool alpha_step);

  RunConfig cfg_;
  std::span<const Utterance> train_, dev_;
  Rng rng_;
  Model model_;
  SearchSplit split_;
  ParamSet net_params_;
  std::vector<Tensor> arch_params_;
  AdamState w_opt_, a_opt_;
  std::size_t epoch_ = 0;
  std::vector<EpochStats> history_;
  std::vector<std::vector<double>> alpha_n_hist_, alpha_e_hist_;
};

/// Train-from-scratch of a discrete model with a cosine learning-rate
/// schedule. The stream drives model initialisation, then per epoch the
/// batch shuffle and the per-forward filter masks.
class ScratchRun {
 public:
  /// `search_state`, when given, supplies the post-search frontend filters.
  ScratchRun(const RunConfig& cfg, const Genotype& genotype, std::span<const Utterance> train,
             std::span<const Utterance> dev, const Checkpoint* search_state = nullptr);
  static ScratchRun resume(const Checkpoint& ck, std::span<const Utterance> train, std::span<const Utterance> dev);

  std::size_t epoch() const { return epoch_; }
  bool done() const { return epoch_ >= cfg_.scratch.epochs; }
  EpochStats run_epoch();

  Checkpoint checkpoint();
  /// Model checkpoint of the best dev-accuracy epoch so far (ties: later epoch).
  Checkpoint best_checkpoint() const;
  std::size_t best_epoch() const { return best_epoch_; }

  const RunConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  const std::vector<EpochStats>& history() const { return history_; }

 private:
  RunConfig cfg_;
  Genotype genotype_;
  std::span<const Utterance> train_, dev_;
  Rng rng_;
  Model model_;
  ParamSet params_;
  AdamState opt_;
  std::size_t epoch_ = 0;
  std::vector<EpochStats> history_;
  std::string best_bytes_;
  std::size_t best_epoch_ = 0;
  double best_acc_ = -1.0;
};

}  // namespace rawpc
