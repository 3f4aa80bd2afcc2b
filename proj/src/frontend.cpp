#include "rawpc/frontend.hpp"

#include <cmath>
#include <numbers>

#include "rawpc/error.hpp"
#include "rawpc/ops.hpp"

namespace rawpc {

std::string_view frontend_kind_name(FrontendKind kind) {
  switch (kind) {
    case FrontendKind::SincMel: return "mel";
    case FrontendKind::SincInvMel: return "inverse_mel";
    case FrontendKind::SincLinear: return "linear";
    case FrontendKind::Conv0: return "conv0";
  }
  return "mel";
}

FrontendKind frontend_kind_from_name(std::string_view name) {
  if (name == "mel") return FrontendKind::SincMel;
  if (name == "inverse_mel") return FrontendKind::SincInvMel;
  if (name == "linear") return FrontendKind::SincLinear;
  if (name == "conv0") return FrontendKind::Conv0;
  throw ConfigError("unknown frontend kind '" + std::string(name) + "' (mel|inverse_mel|linear|conv0)");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hamming_window(std::size_t kernel_len) {
  if (kernel_len < 2) throw ShapeError("hamming_window: kernel_len must be >= 2");
  std::vector<double> w(kernel_len);
  const double denom = static_cast<double>(kernel_len - 1);
  for (std::size_t t = 0; t < kernel_len; ++t) {
    w[t] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / denom);
  }
  return w;
}

BandEdges init_scale(FrontendKind kind, std::size_t channels, double sample_rate) {
  if (channels < 1) throw ShapeError("init_scale: need at least one filter");
  if (kind == FrontendKind::Conv0) throw ConfigError("init_scale: Conv_0 has no frequency scale");
  const double nyquist = sample_rate / 2.0;
  const double f_lo = kind == FrontendKind::SincLinear ? 0.0 : 30.0;
  std::vector<double> edges(channels + 1);
  if (kind == FrontendKind::SincLinear) {
    for (std::size_t i = 0; i <= channels; ++i) {
      edges[i] = f_lo + (nyquist - f_lo) * static_cast<double>(i) / static_cast<double>(channels);
    }
  } else {
    const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(nyquist);
    for (std::size_t i = 0; i <= channels; ++i) {
      edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(channels));
    }
    edges.front() = f_lo;
    edges.back() = nyquist;
    if (kind == FrontendKind::SincInvMel) {
      // Mirror the mel edges across the band: wide filters at low frequency.
      std::vector<double> mirrored(channels + 1);
      for (std::size_t i = 0; i <= channels; ++i) mirrored[i] = f_lo + nyquist - edges[channels - i];
      edges = std::move(mirrored);
    }
  }
  BandEdges out;
  out.f1.assign(edges.begin(), edges.end() - 1);
  out.f2.assign(edges.begin() + 1, edges.end());
  return out;
}

Tensor sinc_kernels(const Tensor& f1, const Tensor& f2, std::span<const double> window, double sample_rate) {
  if (f1.rank() != 1 || f2.shape() != f1.shape()) throw ShapeError("sinc_kernels: f1/f2 must be matching vectors");
  if (window.size() < 2) throw ShapeError("sinc_kernels: kernel_len must be >= 2");
  const std::size_t C = f1.dim(0), K = window.size();
  const double center = static_cast<double>(K - 1) / 2.0;
  const double two_pi = 2.0 * std::numbers::pi;
  Tape* tape = active_tape({&f1, &f2});
  Tensor out = Tensor::zeros({C, 1, K}, tape != nullptr);
  auto ov = out.data();
  auto band_term = [&](double f_hz, double n) {
    const double f = f_hz / sample_rate;
    if (n == 0.0) return 2.0 * f;
    return std::sin(two_pi * f * n) / (std::numbers::pi * n);
  };
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < K; ++t) {
      const double n = static_cast<double>(t) - center;
      ov[c * K + t] = (band_term(f2[c], n) - band_term(f1[c], n)) * window[t];
    }
  }
  if (tape) {
    tape->record([f1, f2, out, w = std::vector<double>(window.begin(), window.end()), sample_rate, C, K,
                  center, two_pi]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      // d/df [2 f sinc(2 pi f n)] = 2 cos(2 pi f n) / sample_rate (f in Hz).
      auto deriv = [&](double f_hz, double n) {
        return 2.0 * std::cos(two_pi * (f_hz / sample_rate) * n) / sample_rate;
      };
      std::span<double> g1 = f1.requires_grad() ? f1.ensure_grad() : std::span<double>{};
      std::span<double> g2 = f2.requires_grad() ? f2.ensure_grad() : std::span<double>{};
      for (std::size_t c = 0; c < C; ++c) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t t = 0; t < K; ++t) {
          const double n = static_cast<double>(t) - center;
          const double gw = g[c * K + t] * w[t];
          s2 += gw * deriv(f2[c], n);
          s1 -= gw * deriv(f1[c], n);
        }
        if (!g1.empty()) g1[c] += s1;
        if (!g2.empty()) g2[c] += s2;
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> clamp_bands(const Tensor& raw_low, const Tensor& raw_band, double nyquist,
                                      double min_band) {
  if (raw_low.shape() != raw_band.shape()) throw ShapeError("clamp_bands: shape mismatch");
  if (!(min_band > 0.0) || !(nyquist > min_band)) throw ConfigError("clamp_bands: need 0 < min_band < nyquist");
  const std::size_t C = raw_low.numel();
  Tape* tape = active_tape({&raw_low, &raw_band});
  Tensor f1 = Tensor::zeros(raw_low.shape(), tape != nullptr);
  Tensor f2 = Tensor::zeros(raw_low.shape(), tape != nullptr);
  // Local derivatives: df1/dlow, df2/dlow, df2/dband.
  std::vector<double> d1_low(C), d2_low(C), d2_band(C);
  const double low_cap = nyquist - min_band;
  for (std::size_t c = 0; c < C; ++c) {
    const double lo = raw_low[c], bw = raw_band[c];
    const double sign_lo = lo < 0.0 ? -1.0 : 1.0;
    const double sign_bw = bw < 0.0 ? -1.0 : 1.0;
    const double a = std::abs(lo);
    double v1 = a;
    d1_low[c] = sign_lo;
    if (a >= low_cap) {
      v1 = low_cap;
      d1_low[c] = 0.0;
    }
    const double b = std::abs(bw);
    double band = b;
    double dband = sign_bw;
    if (b <= min_band) {
      band = min_band;
      dband = 0.0;
    }
    double v2 = v1 + band;
    if (v2 >= nyquist) {
      v2 = nyquist;
      d2_low[c] = 0.0;
      d2_band[c] = 0.0;
    } else {
      d2_low[c] = d1_low[c];
      d2_band[c] = dband;
    }
    f1[c] = v1;
    f2[c] = v2;
  }
  if (tape) {
    tape->record([raw_low, raw_band, f1, f2, d1_low = std::move(d1_low), d2_low = std::move(d2_low),
                  d2_band = std::move(d2_band), C]() mutable {
      const bool has1 = f1.has_grad(), has2 = f2.has_grad();
      if (!has1 && !has2) return;
      std::span<const double> g1 = f1.grad(), g2 = f2.grad();
      if (raw_low.requires_grad()) {
        auto gl = raw_low.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
          if (has1) gl[c] += g1[c] * d1_low[c];
          if (has2) gl[c] += g2[c] * d2_low[c];
        }
      }
      if (raw_band.requires_grad() && has2) {
        auto gb = raw_band.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) gb[c] += g2[c] * d2_band[c];
      }
    });
  }
  return {f1, f2};
}

FilterMask sample_mask(Rng& rng, std::size_t channels, std::size_t max_masked) {
  if (max_masked > channels) {
    throw ConfigError("sample_mask: F=" + std::to_string(max_masked) + " exceeds C=" + std::to_string(channels));
  }
  if (max_masked <= 1) return {};
  FilterMask m;
  m.count = static_cast<std::size_t>(rng.uniform_int(max_masked));
  m.begin = static_cast<std::size_t>(rng.uniform_int(channels - m.count));
  return m;
}

SincFilterBank::SincFilterBank(const BandEdges& edges, std::size_t kernel_len, double sample_rate, bool learnable,
                               double min_band_hz)
    : window_(hamming_window(kernel_len)), sample_rate_(sample_rate), min_band_(min_band_hz), learnable_(learnable) {
  const std::size_t C = edges.f1.size();
  if (C == 0 || edges.f2.size() != C) throw ConfigError("SincFilterBank: mismatched band edges");
  const double nyquist = sample_rate / 2.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (!(edges.f1[c] >= 0.0 && edges.f1[c] < edges.f2[c] && edges.f2[c] <= nyquist)) {
      throw ConfigError("SincFilterBank: invalid band " + std::to_string(c));
    }
  }
  if (learnable) {
    std::vector<double> band(C);
    for (std::size_t c = 0; c < C; ++c) band[c] = edges.f2[c] - edges.f1[c];
    raw_low_ = Tensor::from({C}, edges.f1, true);
    raw_band_ = Tensor::from({C}, std::move(band), true);
  } else {
    raw_low_ = Tensor::from({C}, edges.f1);
    raw_band_ = Tensor::from({C}, edges.f2);
  }
}

BandEdges SincFilterBank::edges() const {
  BandEdges e;
  if (!learnable_) {
    e.f1.assign(raw_low_.data().begin(), raw_low_.data().end());
    e.f2.assign(raw_band_.data().begin(), raw_band_.data().end());
    return e;
  }
  NoGradGuard no_grad;
  auto [f1, f2] = clamp_bands(raw_low_, raw_band_, sample_rate_ / 2.0, min_band_);
  e.f1.assign(f1.data().begin(), f1.data().end());
  e.f2.assign(f2.data().begin(), f2.data().end());
  return e;
}

Tensor SincFilterBank::build_kernels() const {
  if (!learnable_) return sinc_kernels(raw_low_, raw_band_, window_, sample_rate_);
  auto [f1, f2] = clamp_bands(raw_low_, raw_band_, sample_rate_ / 2.0, min_band_);
  return sinc_kernels(f1, f2, window_, sample_rate_);
}

std::vector<Tensor> SincFilterBank::params() const {
  if (!learnable_) return {};
  return {raw_low_, raw_band_};
}

void SincFilterBank::collect(const std::string& prefix, ParamSet& out) {
  if (learnable_) {
    out.add(prefix + ".raw_low", raw_low_);
    out.add(prefix + ".raw_band", raw_band_);
  } else {
    out.add_buffer(prefix + ".f1", raw_low_.data());
    out.add_buffer(prefix + ".f2", raw_band_.data());
  }
}

Frontend::Frontend(const FrontendConfig& cfg, Rng& rng) : cfg_(cfg), bn_(cfg.channels, true) {
  if (cfg.kernel_len < 2) throw ConfigError("frontend: kernel_len must be >= 2");
  if (cfg.kind == FrontendKind::Conv0) {
    cfg_.learnable = true;
    conv0_ = Tensor::zeros({cfg.channels, 1, cfg.kernel_len}, true);
    init_uniform(conv0_, rng, 1.0 / std::sqrt(static_cast<double>(cfg.kernel_len)));
  } else {
    bank_ = SincFilterBank(init_scale(cfg.kind, cfg.channels, cfg.sample_rate), cfg.kernel_len, cfg.sample_rate,
                           cfg.learnable, cfg.min_band_hz);
  }
}

Tensor Frontend::kernels() const { return is_sinc() ? bank_.build_kernels() : conv0_; }

std::size_t Frontend::output_length(std::size_t input_length) const {
  const std::size_t conv = ops::conv1d_out_len(input_length, cfg_.kernel_len, 1, 1, 0);
  if (conv < 3) throw ShapeError("frontend: input too short");
  return (conv - 3) / 3 + 1;
}

Tensor Frontend::forward(const Tensor& wave, std::optional<FilterMask> mask, bool training) {
  if (wave.rank() != 3 || wave.dim(1) != 1) throw ShapeError("frontend: expected waveform batch [B, 1, L]");
  Tensor k = kernels();
  if (training && mask && mask->count > 0) {
    if (mask->begin + mask->count > cfg_.channels) throw ShapeError("frontend: filter mask out of range");
    k = ops::zero_leading_slices(k, mask->begin, mask->count);
  }
  Tensor y = ops::conv1d(wave, k, Tensor{}, 1, 1, 0);
  y = ops::maxpool1d(y, 3, 3);
  y = bn_.forward(y, training);
  return ops::leaky_relu(y, cfg_.leaky_slope);
}

std::vector<Tensor> Frontend::filter_params() const {
  if (!is_sinc()) return {conv0_};
  return bank_.params();
}

void Frontend::collect_filters(const std::string& prefix, ParamSet& out) {
  if (is_sinc()) {
    bank_.collect(prefix + ".sinc", out);
  } else {
    out.add(prefix + ".conv0.weight", conv0_);
  }
}

void Frontend::collect(const std::string& prefix, ParamSet& out) {
  collect_filters(prefix, out);
  bn_.collect(prefix + ".bn", out);
}

}  // namespace rawpc
