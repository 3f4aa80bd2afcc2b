#include "doctest.h"
#include "rawpc/config.hpp"
#include "rawpc/error.hpp"
#include "rawpc/model.hpp"
#include "rawpc/ops.hpp"

using namespace rawpc;

namespace {

ModelConfig toy_model() { return toy_config().model; }

Tensor random_wave(Rng& rng, std::size_t B, std::size_t L) {
  Tensor w = Tensor::zeros({B, 1, L});
  for (double& v : w.data()) v = 0.3 * rng.normal();
  return w;
}

}  // namespace

TEST_CASE("full-size structure") {
  const ModelConfig cfg;
  const auto trace = expected_shapes(cfg);
  CHECK(trace[0].second == Shape{1, 64, 21291});
  CHECK(trace[1].second == Shape{1, 64, 10645});
  const std::vector<Shape> cells{{1, 256, 5322}, {1, 256, 2661}, {1, 512, 1330}, {1, 512, 665},
                                 {1, 512, 332},  {1, 1024, 166}, {1, 1024, 83},  {1, 1024, 41}};
  for (std::size_t i = 0; i < cells.size(); ++i) CHECK(trace[2 + i].second == cells[i]);
  CHECK(trace[2].first == "normal_cell");
  CHECK(trace[2 + 2].first == "expand_cell");
  CHECK(trace[2 + 3].first == "normal_cell");
  CHECK(trace[2 + 5].first == "expand_cell");

  Rng rng(51);
  Model m = Model::discrete(cfg, reference_genotype(), rng);
  const auto c = m.count_params();
  CHECK(c.gru == 18892800);
  const double rel = (static_cast<double>(c.total) - 24.48e6) / 24.48e6;
  CHECK(std::abs(rel) <= 0.03);
  CHECK(c.total == c.frontend + c.stem + c.cells + c.gru + c.fc_head);
  CHECK(c.fc_head == 1024 * 1024 + 1024 + 2 * 1024);
}

TEST_CASE("toy parameter count matches the closed form") {
  Rng rng(52);
  Model m = Model::discrete(toy_model(), reference_genotype(), rng);
  const auto c = m.count_params();
  // Fixed sinc bank: only the frontend batch norm is learnable.
  CHECK(c.frontend == 2 * 16);
  CHECK(c.stem == 16 * 8 * 3 + 2 * 8);
  // Preprocessing plus reference ops (normal: 12c^2 + 12c, expand: 11c^2 + 10c).
  const std::size_t cell0 = (16 * 8 + 16) + (8 * 8 + 16) + 12 * 64 + 12 * 8;
  const std::size_t cell1 = (8 * 8 + 16) + (32 * 8 + 16) + 12 * 64 + 12 * 8;
  const std::size_t cell2 = (32 * 16 + 32) + (32 * 16 + 32) + 11 * 256 + 10 * 16;
  const std::size_t cell3 = (32 * 16 + 32) + (64 * 16 + 32) + 12 * 256 + 12 * 16;
  CHECK(c.cells == cell0 + cell1 + cell2 + cell3);
  CHECK(c.gru == 3 * (64 * 64 + 64 * 64) + 6 * 64);
  CHECK(c.fc_head == 64 * 64 + 64 + 2 * 64);
  CHECK(c.total == 40912);
}

TEST_CASE("a model without cells counts only stem, GRU and head") {
  ModelConfig cfg = toy_model();
  cfg.cells = 0;
  cfg.expand_positions.clear();
  Rng rng(53);
  Model m = Model::discrete(cfg, reference_genotype(), rng);
  const auto c = m.count_params();
  CHECK(c.cells == 0);
  CHECK(c.gru == 3 * (64 * 8 + 64 * 64) + 6 * 64);
  CHECK(c.total == 32 + 400 + c.gru + 64 * 64 + 64 + 128);
}

TEST_CASE("forward shapes follow the shape trace") {
  Rng rng(54);
  const ModelConfig cfg = toy_model();
  for (bool search : {true, false}) {
    Model m = search ? Model::search(cfg, rng) : Model::discrete(cfg, reference_genotype(), rng);
    ShapeTrace trace;
    NoGradGuard ng;
    const auto out = m.forward(random_wave(rng, 2, cfg.input_length), true, &rng, &trace);
    const auto expected = expected_shapes(cfg);
    REQUIRE(trace.size() == expected.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      CHECK(trace[i].first == expected[i].first);
      Shape e = expected[i].second;
      e[0] = 2;
      CHECK(trace[i].second == e);
    }
    CHECK(out.cos.shape() == Shape{2, 2});
    for (double v : out.cos.data()) CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("evaluation draws nothing and is repeatable") {
  Rng rng(55);
  Model m = Model::search(toy_model(), rng);
  const Tensor wave = random_wave(rng, 3, 4000);
  NoGradGuard ng;
  Rng probe(9), ref(9);
  const auto a = m.forward(wave, false, &probe);
  const auto b = m.forward(wave, false);
  for (std::size_t i = 0; i < a.cos.numel(); ++i) CHECK(a.cos[i] == b.cos[i]);
  CHECK(probe.next_u64() == ref.next_u64());
  CHECK_THROWS_AS(m.forward(wave, true), ShapeError);
}

TEST_CASE("parameter groups") {
  Rng rng(56);
  ModelConfig cfg = toy_model();
  Model s = Model::search(cfg, rng);
  CHECK(s.arch_params().size() == 2);
  CHECK(s.alpha_normal.shape() == Shape{14, 8});
  for (const auto& [name, t] : s.network_params().params) CHECK(name.rfind("alpha.", 0) != 0);
  CHECK(s.filter_params().params.empty());
  cfg.frontend.learnable = true;
  Model l = Model::search(cfg, rng);
  REQUIRE(l.filter_params().params.size() == 2);
  l.freeze_frontend_filters();
  for (const auto& [name, t] : l.filter_params().params) CHECK_FALSE(t.requires_grad());
}

TEST_CASE("P2SGrad loss and scoring") {
  const Tensor cos = Tensor::from({2, 2}, {0.5, -0.5, 0.25, 0.75});
  const std::vector<int> labels{kBonafide, kSpoof};
  // ((0.5-1)^2 + 0.5^2 + 0.25^2 + (0.75-1)^2) / 4
  CHECK(p2sgrad_loss(cos, labels).item() == doctest::Approx((0.25 + 0.25 + 0.0625 + 0.0625) / 4.0));
  CHECK(scores_from_cos(cos) == std::vector<double>{0.5, 0.25});
  CHECK(count_correct(cos, labels) == 2);
  CHECK_THROWS_AS(p2sgrad_loss(cos, std::vector<int>{0, 2}), ShapeError);
}

TEST_CASE("configuration validation") {
  ModelConfig cfg = toy_model();
  cfg.expand_positions = {7};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_model();
  cfg.k_c = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_model();
  cfg.input_length = 150;
  CHECK_THROWS_AS(expected_shapes(cfg), ShapeError);
}
