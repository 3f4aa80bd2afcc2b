#include "spectral_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace rawpc::testing {

namespace {

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const auto w = std::polar(1.0, -2.0 * std::numbers::pi / static_cast<double>(len));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> wk = 1.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k], v = a[i + k + len / 2] * wk;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        wk *= w;
      }
    }
  }
}

}  // namespace

int harmonic_peak_classifier(std::span<const double> samples, double sample_rate, double tolerance) {
  std::size_t n = 1;
  while (n < 8 * samples.size()) n <<= 1;
  std::vector<std::complex<double>> buf(n, 0.0);
  const double N = static_cast<double>(samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / (N - 1.0));
    buf[t] = samples[t] * hann;
  }
  fft(buf);
  const double hz_per_bin = sample_rate / static_cast<double>(n);
  std::vector<double> mag(n / 2);
  for (std::size_t i = 0; i < n / 2; ++i) mag[i] = std::abs(buf[i]);
  std::vector<std::pair<double, double>> peaks;  // (magnitude, frequency)
  for (std::size_t i = 1; i + 1 < mag.size(); ++i) {
    if (mag[i] > mag[i - 1] && mag[i] >= mag[i + 1] && static_cast<double>(i) * hz_per_bin > 40.0) {
      // Parabolic interpolation of the peak position.
      const double a = mag[i - 1], b = mag[i], c = mag[i + 1];
      const double off = 0.5 * (a - c) / (a - 2.0 * b + c);
      peaks.emplace_back(b, (static_cast<double>(i) + off) * hz_per_bin);
    }
  }
  std::sort(peaks.begin(), peaks.end(), std::greater<>());
  std::vector<double> freqs;
  for (const auto& [m, f] : peaks) {
    if (freqs.size() == 5) break;
    if (std::all_of(freqs.begin(), freqs.end(), [&](double g) { return std::abs(g - f) > 30.0; })) freqs.push_back(f);
  }
  std::sort(freqs.begin(), freqs.end());
  for (std::size_t h = 1; h < freqs.size(); ++h) {
    const double ratio = freqs[h] / (static_cast<double>(h + 1) * freqs[0]);
    if (std::abs(ratio - 1.0) > tolerance) return 1;
  }
  return 0;
}

}  // namespace rawpc::testing
