#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "rawpc/checkpoint.hpp"
#include "rawpc/error.hpp"
#include "rawpc/trainer.hpp"
#include "support/fixtures.hpp"

using namespace rawpc;

TEST_CASE("cosine schedule endpoints") {
  CHECK(std::abs(cosine_lr(0, 100, 5e-5, 2e-5) - 5e-5) <= 1e-12);
  CHECK(cosine_lr(99, 100, 5e-5, 2e-5) == 2e-5);
  CHECK(cosine_lr(0, 1, 5e-5, 2e-5) == 5e-5);
  for (std::size_t e = 1; e < 100; ++e) CHECK(cosine_lr(e, 100, 5e-5, 2e-5) <= cosine_lr(e - 1, 100, 5e-5, 2e-5));
}

TEST_CASE("epoch selection prefers the later epoch on ties") {
  CHECK(select_best_epoch(std::vector<double>{0.5, 0.9, 0.7, 0.9}) == 3);
  CHECK(select_best_epoch(std::vector<double>{0.2}) == 0);
  CHECK_THROWS_AS(select_best_epoch(std::vector<double>{}), ConfigError);
}

TEST_CASE("search split is disjoint, covering and class balanced") {
  std::vector<int> labels;
  for (int i = 0; i < 41; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
  Rng rng(71);
  const auto s = split_search_data(labels, rng);
  std::vector<std::size_t> all(s.w);
  all.insert(all.end(), s.alpha.begin(), s.alpha.end());
  std::sort(all.begin(), all.end());
  CHECK(all.size() == 41);
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  const auto spoof_w = std::count_if(s.w.begin(), s.w.end(), [&](auto i) { return labels[i] == 1; });
  CHECK(spoof_w == 14 / 2);
}

TEST_CASE("bi-level search keeps alpha fixed during warm-up") {
  const RunConfig cfg = testing::micro_config();
  const auto data = testing::synth_splits(cfg, 5, 8, 4, 0);
  SearchRun run(cfg, data.train, data.dev);
  const std::vector<double> a0(run.model().alpha_normal.data().begin(), run.model().alpha_normal.data().end());
  while (!run.done()) run.run_epoch();
  CHECK(run.alpha_normal_history()[0] == a0);
  CHECK(run.alpha_normal_history()[1] == a0);
  CHECK(run.alpha_normal_history()[2] != a0);
  CHECK(run.alpha_expand_history()[1] != run.alpha_expand_history()[2]);
  std::vector<std::size_t> w(run.audit.w_indices), a(run.audit.alpha_indices);
  std::sort(w.begin(), w.end());
  std::sort(a.begin(), a.end());
  std::vector<std::size_t> both;
  std::set_intersection(w.begin(), w.end(), a.begin(), a.end(), std::back_inserter(both));
  CHECK(both.empty());
  CHECK_FALSE(a.empty());
  for (auto i : w) CHECK(std::binary_search(run.split().w.begin(), run.split().w.end(), i));
  const auto g = run.selected_genotype();
  CHECK_NOTHROW(validate(g.normal));
  CHECK(run.history().size() == 3);
}

TEST_CASE("search resume reproduces the uninterrupted run bitwise") {
  const RunConfig cfg = testing::micro_config();
  const auto data = testing::synth_splits(cfg, 6, 8, 4, 0);
  SearchRun full(cfg, data.train, data.dev);
  while (!full.done()) full.run_epoch();
  SearchRun first(cfg, data.train, data.dev);
  first.run_epoch();
  first.run_epoch();
  const std::string bytes = first.checkpoint().serialize();
  SearchRun resumed = SearchRun::resume(Checkpoint::deserialize(bytes), data.train, data.dev);
  CHECK(resumed.checkpoint().serialize() == bytes);
  while (!resumed.done()) resumed.run_epoch();
  CHECK(resumed.checkpoint().serialize() == full.checkpoint().serialize());
  CHECK(resumed.selected_genotype() == full.selected_genotype());
}

TEST_CASE("scratch training resume reproduces the uninterrupted run bitwise") {
  const RunConfig cfg = testing::micro_config();
  const auto data = testing::synth_splits(cfg, 7, 8, 4, 0);
  const Genotype g = reference_genotype();
  ScratchRun full(cfg, g, data.train, data.dev);
  while (!full.done()) full.run_epoch();
  ScratchRun first(cfg, g, data.train, data.dev);
  first.run_epoch();
  const auto path = std::filesystem::temp_directory_path() / "rawpc_resume.ckpt";
  first.checkpoint().save(path);
  ScratchRun resumed = ScratchRun::resume(Checkpoint::load(path), data.train, data.dev);
  while (!resumed.done()) resumed.run_epoch();
  CHECK(resumed.checkpoint().serialize() == full.checkpoint().serialize());
  CHECK(resumed.best_checkpoint().serialize() == full.best_checkpoint().serialize());
  std::filesystem::remove(path);
  CHECK(full.history().front().lr == cfg.scratch.lr_max);
  CHECK(full.history().back().lr == cfg.scratch.lr_min);
}

TEST_CASE("model checkpoints reload to identical scores") {
  const RunConfig cfg = testing::micro_config();
  const auto data = testing::synth_splits(cfg, 8, 6, 3, 3);
  ScratchRun run(cfg, reference_genotype(), data.train, data.dev);
  run.run_epoch();
  Model m = load_model(run.best_checkpoint());
  const auto a = evaluate(m, data.eval, 4), b = evaluate(run.model(), data.eval, 4);
  REQUIRE(a.scores.size() == 6);
  CHECK(a.scores == b.scores);
  CHECK(a.scores[0].utterance_id == data.eval[0].id);
  CHECK_THROWS_AS(SearchRun::resume(run.checkpoint(), data.train, data.dev), ConfigError);
}

TEST_CASE("frozen frontend filters do not move") {
  RunConfig cfg = testing::micro_config();
  cfg.model.frontend.learnable = true;
  const auto data = testing::synth_splits(cfg, 9, 6, 3, 0);
  ScratchRun run(cfg, reference_genotype(), data.train, data.dev);
  const auto before = run.model().frontend().bank().edges();
  run.run_epoch();
  const auto after = run.model().frontend().bank().edges();
  CHECK(before.f1 == after.f1);
  CHECK(before.f2 == after.f2);
}

TEST_CASE("log lines") {
  const EpochStats s{3, 0.25, 0.5, 0.75, 5e-5};
  CHECK(format_log_line(s) == "3\t0.25\t0.5\t0.750000\t5.0000000000000002e-05\n");
  CHECK(log_header().rfind("epoch\t", 0) == 0);
}
