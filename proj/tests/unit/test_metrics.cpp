#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "rawpc/error.hpp"
#include "rawpc/metrics.hpp"
#include "rawpc/rng.hpp"
#include "support/oracles.hpp"

using namespace rawpc;

namespace {

std::vector<double> random_scores(Rng& rng, std::size_t n, double shift) {
  std::vector<double> v(n);
  // Coarse grid so ties occur often.
  for (double& s : v) s = std::round(4.0 * (rng.normal() + shift)) / 4.0;
  return v;
}

}  // namespace

TEST_CASE("eer fixtures") {
  CHECK(compute_eer(std::vector<double>{2, 3}, std::vector<double>{0, 1}).eer == 0.0);
  CHECK(compute_eer(std::vector<double>{1, 3}, std::vector<double>{0, 2}).eer == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(compute_eer(std::vector<double>{1, 2, 2, 5}, std::vector<double>{5, 2, 1, 2}).eer ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("eer matches exhaustive sweep") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nt = 1 + rng.uniform_int(10), nn = 1 + rng.uniform_int(10);
    const auto t = random_scores(rng, nt, rng.uniform(-1.0, 2.0));
    const auto n = random_scores(rng, nn, 0.0);
    CHECK(std::abs(compute_eer(t, n).eer - testing::brute_force_eer(t, n)) <= 1e-12);
  }
}

TEST_CASE("eer invariances") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_scores(rng, 12, 1.0), n = random_scores(rng, 9, 0.0);
    const double e = compute_eer(t, n).eer;
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    std::vector<double> ta, na, tneg, nneg;
    for (double s : t) {
      ta.push_back(2.0 * s + 4.0);
      tneg.push_back(-s);
    }
    for (double s : n) {
      na.push_back(2.0 * s + 4.0);
      nneg.push_back(-s);
    }
    CHECK(compute_eer(ta, na).eer == doctest::Approx(e).epsilon(1e-12));
    CHECK(compute_eer(nneg, tneg).eer == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("eer threshold lies between scores on the crossing") {
  const auto r = compute_eer(std::vector<double>{1, 3}, std::vector<double>{0, 2});
  CHECK(r.threshold >= 1.0);
  CHECK(r.threshold <= 3.0);
  CHECK_THROWS_AS(compute_eer(std::vector<double>{}, std::vector<double>{1.0}), DataError);
}

TEST_CASE("min t-DCF matches brute force with random costs") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    TdcfCosts c;
    c.p_spoof = rng.uniform(0.01, 0.5);
    const double rest = 1.0 - c.p_spoof;
    const double tar_frac = rng.uniform(0.5, 0.999);
    c.p_tar = rest * tar_frac;
    c.p_non = rest * (1.0 - tar_frac);
    c.c_miss_asv = rng.uniform(0.5, 5.0);
    c.c_fa_asv = rng.uniform(0.5, 20.0);
    c.c_miss_cm = rng.uniform(0.5, 5.0);
    c.c_fa_cm = rng.uniform(0.5, 20.0);
    c.p_miss_asv = rng.uniform(0.0, 0.1);
    c.p_fa_asv = rng.uniform(0.0, 0.1);
    c.p_miss_spoof_asv = rng.uniform(0.0, 0.9);
    const double c1 = c.p_tar * (c.c_miss_cm - c.c_miss_asv * c.p_miss_asv) - c.p_non * c.c_fa_asv * c.p_fa_asv;
    const double c2 = c.c_fa_cm * c.p_spoof * (1.0 - c.p_miss_spoof_asv);
    if (c1 <= 0.0 || c2 <= 0.0) {
      CHECK_THROWS_AS(c.validate(), ConfigError);
      continue;
    }
    CHECK(c.c1() == doctest::Approx(c1).epsilon(1e-14));
    CHECK(c.c2() == doctest::Approx(c2).epsilon(1e-14));
    const auto bona = random_scores(rng, 1 + rng.uniform_int(15), 1.0);
    const auto spoof = random_scores(rng, 1 + rng.uniform_int(15), 0.0);
    std::vector<ScoreRecord> recs;
    for (double s : bona) recs.push_back({"b", "-", 0, s});
    for (double s : spoof) recs.push_back({"s", "A01", 1, s});
    const double got = compute_min_tdcf(recs, c).min_tdcf;
    CHECK(std::abs(got - testing::brute_force_min_tdcf(bona, spoof, c1, c2)) <= 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("min t-DCF fixtures") {
  // Accept-all: p_miss = 0, p_fa = 1.
  const std::vector<double> same{1.0, 1.0};
  CHECK(min_normalized_tdcf(same, same, 0.6, 0.4).min_tdcf <= 0.4 / 0.4);
  // Hand fixture: bona {2, 0.5}, spoof {1, -1}, C1 = 0.6, C2 = 0.4.
  // Thresholds: -inf (0,1) -> 1.0; (-1,1] (0,0.5) -> 0.5; (1,2] excluding 0.5 cut -> ...
  const std::vector<double> b{2.0, 0.5}, s{1.0, -1.0};
  // theta in (-1, 0.5]: miss 0, fa 0.5 -> 0.2/0.4 = 0.5; theta in (1, 2]: miss 0.5, fa 0 -> 0.3/0.4 = 0.75.
  CHECK(min_normalized_tdcf(b, s, 0.6, 0.4).min_tdcf == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(min_normalized_tdcf(std::vector<double>{3.0}, std::vector<double>{1.0}, 0.6, 0.4).min_tdcf == 0.0);
}

TEST_CASE("t-DCF cost parsing") {
  const auto c = parse_tdcf_costs("p_spoof = 0.1\n# comment\np_tar = 0.8\np_non = 0.1\nc_fa_cm = 5\n");
  CHECK(c.p_spoof == 0.1);
  CHECK(c.c_fa_cm == 5.0);
  CHECK_THROWS_AS(parse_tdcf_costs("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_tdcf_costs("p_spoof = 1.5\n"), ConfigError);
}

TEST_CASE("per-attack report") {
  std::vector<ScoreRecord> recs{{"b1", "-", 0, 2.0}, {"b2", "-", 0, 3.0}, {"s1", "A01", 1, 0.0},
                                {"s2", "A01", 1, 1.0}, {"s3", "A02", 1, 2.5},  {"s4", "A02", 1, 0.5},
                                {"s5", "A03", 1, 4.0}};
  const auto rep = per_attack_report(recs);
  REQUIRE(rep.attacks.size() == 3);
  const std::vector<double> bona{2.0, 3.0};
  CHECK(rep.attacks[0].attack_id == "A01");
  CHECK(rep.attacks[0].eer == 0.0);
  CHECK(rep.attacks[1].eer == doctest::Approx(testing::brute_force_eer(bona, std::vector<double>{2.5, 0.5})));
  CHECK(rep.attacks[2].eer == doctest::Approx(testing::brute_force_eer(bona, std::vector<double>{4.0})));
  CHECK(rep.worst.attack_id == "A03");
  CHECK(rep.pooled.n_spoof == 5);
  CHECK(rep.pooled.eer ==
        doctest::Approx(testing::brute_force_eer(bona, std::vector<double>{0.0, 1.0, 2.5, 0.5, 4.0})));

  std::vector<ScoreRecord> single{{"b", "-", 0, 1.0}, {"s", "A07", 1, 0.2}, {"t", "A07", 1, 1.5}};
  const auto one = per_attack_report(single);
  CHECK(one.attacks[0].eer == one.pooled.eer);
}

TEST_CASE("score file round trip") {
  Rng rng(14);
  std::vector<ScoreRecord> recs;
  for (int i = 0; i < 10000; ++i) {
    const int label = static_cast<int>(rng.uniform_int(2));
    // Values already at 6 significant digits survive the text form exactly.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", rng.normal());
    recs.push_back({"utt" + std::to_string(i), label ? "A0" + std::to_string(1 + i % 3) : "-", label, std::stod(buf)});
  }
  const auto text = format_scores(recs);
  CHECK(parse_scores(text) == recs);
  CHECK(format_scores(parse_scores(text)) == text);
  const auto path = std::filesystem::temp_directory_path() / "rawpc_scores_test.txt";
  write_scores(path, recs);
  CHECK(read_scores(path) == recs);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_scores("u1 - maybe 0.5\n"), DataError);
}
