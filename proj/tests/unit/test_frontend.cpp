#include <cmath>

#include "doctest.h"
#include "rawpc/error.hpp"
#include "rawpc/frontend.hpp"
#include "support/dsp.hpp"

using namespace rawpc;

TEST_CASE("sinc kernels pass their band and reject the rest") {
  for (double sr : {16000.0, 4000.0}) {
    for (std::size_t K : {128, 251}) {
      const double tw = testing::hamming_transition_hz(K, sr);
      const auto window = hamming_window(K);
      for (auto [f1, f2] : testing::representative_bands(sr, tw)) {
        const Tensor k = sinc_kernels(Tensor::from({1}, {f1}), Tensor::from({1}, {f2}), window, sr);
        const auto r = testing::band_response(k.data(), sr, f1, f2, tw);
        CAPTURE(f1);
        CAPTURE(f2);
        CHECK(r.peak_hz >= f1);
        CHECK(r.peak_hz <= f2);
        CHECK(r.stop_db <= -20.0);
      }
    }
  }
}

TEST_CASE("degenerate band gives a zero kernel") {
  const auto window = hamming_window(64);
  const Tensor k = sinc_kernels(Tensor::from({2}, {300.0, 0.0}), Tensor::from({2}, {300.0, 0.0}), window, 16000.0);
  for (double v : k.data()) CHECK(v == 0.0);
}

TEST_CASE("kernels are symmetric") {
  const auto window = hamming_window(129);
  const Tensor k = sinc_kernels(Tensor::from({1}, {200.0}), Tensor::from({1}, {900.0}), window, 16000.0);
  for (std::size_t t = 0; t < 129; ++t) CHECK(k[t] == doctest::Approx(k[128 - t]).epsilon(1e-14));
}

TEST_CASE("filter scales") {
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
  const auto mel = init_scale(FrontendKind::SincMel, 64, 16000.0);
  REQUIRE(mel.f1.size() == 64);
  CHECK(mel.f1.front() == 30.0);
  CHECK(mel.f2.back() == 8000.0);
  for (std::size_t c = 0; c + 1 < 64; ++c) {
    CHECK(mel.f2[c] == mel.f1[c + 1]);
    CHECK(mel.f2[c + 1] - mel.f1[c + 1] > mel.f2[c] - mel.f1[c]);
  }
  const auto inv = init_scale(FrontendKind::SincInvMel, 64, 16000.0);
  for (std::size_t c = 0; c + 1 < 64; ++c) CHECK(inv.f2[c + 1] - inv.f1[c + 1] < inv.f2[c] - inv.f1[c]);
  const auto lin = init_scale(FrontendKind::SincLinear, 16, 4000.0);
  for (std::size_t c = 0; c < 16; ++c) CHECK(lin.f2[c] - lin.f1[c] == doctest::Approx(125.0));
  CHECK_THROWS_AS(init_scale(FrontendKind::Conv0, 4, 16000.0), ConfigError);
}

TEST_CASE("filter mask law") {
  Rng rng(41);
  constexpr std::size_t C = 64, F = 16, N = 10000;
  std::vector<double> counts(F, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto m = sample_mask(rng, C, F);
    REQUIRE(m.count < F);
    REQUIRE(m.begin + m.count <= C);
    counts[m.count] += 1.0;
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(N) / F;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 15 degrees of freedom.
  CHECK(chi2 < 30.578);
  for (std::size_t f : {0, 1}) {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_mask(a, C, f).count == 0);
    CHECK(a.next_u64() == b.next_u64());
  }
  CHECK_THROWS_AS(sample_mask(rng, 8, 9), ConfigError);
}

TEST_CASE("frontend masking zeroes the masked filters in training only") {
  Rng rng(42);
  FrontendConfig cfg;
  cfg.kind = FrontendKind::SincLinear;
  cfg.channels = 8;
  cfg.kernel_len = 32;
  cfg.sample_rate = 4000.0;
  Frontend fe(cfg, rng);
  Tensor wave = Tensor::zeros({1, 1, 200});
  for (double& v : wave.data()) v = rng.normal();
  NoGradGuard ng;
  const FilterMask mask{2, 3};
  const Tensor masked = fe.forward(wave, mask, true);
  const std::size_t L = fe.output_length(200);
  REQUIRE(masked.shape() == Shape{1, 8, L});
  // A zeroed filter is constant after batch norm, so its output row is flat.
  for (std::size_t c = 2; c < 5; ++c)
    for (std::size_t t = 1; t < L; ++t) CHECK(masked[c * L + t] == masked[c * L]);
  const Tensor eval_a = fe.forward(wave, mask, false), eval_b = fe.forward(wave, std::nullopt, false);
  for (std::size_t i = 0; i < eval_a.numel(); ++i) CHECK(eval_a[i] == eval_b[i]);
}

TEST_CASE("learnable banks respect the minimum bandwidth") {
  SincFilterBank bank(init_scale(FrontendKind::SincMel, 4, 16000.0), 64, 16000.0, true, 50.0);
  auto p = bank.params();
  REQUIRE(p.size() == 2);
  p[1][0] = 1.0;
  p[0][3] = 9000.0;
  const auto e = bank.edges();
  CHECK(e.f2[0] - e.f1[0] == doctest::Approx(50.0));
  CHECK(e.f1[3] == doctest::Approx(7950.0));
  CHECK(e.f2[3] == doctest::Approx(8000.0));
  CHECK(SincFilterBank(init_scale(FrontendKind::SincMel, 4, 16000.0), 64, 16000.0, false, 50.0).params().empty());
}
