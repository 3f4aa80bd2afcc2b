#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rawpc/nn.hpp"
#include "rawpc/rng.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc {

enum class FrontendKind { SincMel, SincInvMel, SincLinear, Conv0 };

std::string_view frontend_kind_name(FrontendKind kind);
FrontendKind frontend_kind_from_name(std::string_view name);

struct FrontendConfig {
  FrontendKind kind = FrontendKind::SincMel;
  /// Ignored for Conv0, which is always learnable.
  bool learnable = false;
  std::size_t channels = 64;
  std::size_t kernel_len = 128;
  double sample_rate = 16000.0;
  /// Minimum bandwidth enforced on learnable banks.
  double min_band_hz = 50.0;
  double leaky_slope = 0.3;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Symmetric Hamming window 0.54 - 0.46 cos(2 pi t / (K-1)).
std::vector<double> hamming_window(std::size_t kernel_len);

struct BandEdges {
  std::vector<double> f1;  ///< cut-in, Hz
  std::vector<double> f2;  ///< cut-off, Hz
};

/// Initial band edges for `channels` filters between the scale's lower edge
/// (30 Hz for mel and inverse-mel, 0 Hz for linear) and Nyquist.
BandEdges init_scale(FrontendKind kind, std::size_t channels, double sample_rate);

/// Windowed difference-of-sincs kernels, shape [C, 1, K]:
///   g[n] = 2 f2 sinc(2 pi f2 n) - 2 f1 sinc(2 pi f1 n),  n = t - (K-1)/2,
/// with frequencies normalised by the sample rate. Differentiable in f1, f2.
Tensor sinc_kernels(const Tensor& f1, const Tensor& f2, std::span<const double> window, double sample_rate);

/// Maps unconstrained (low, band) parameters to valid edges:
///   f1 = min(|low|, nyquist - min_band)
///   f2 = min(f1 + max(|band|, min_band), nyquist)
std::pair<Tensor, Tensor> clamp_bands(const Tensor& raw_low, const Tensor& raw_band, double nyquist,
                                      double min_band);

/// Filters [begin, begin + count) are zeroed during a training pass.
struct FilterMask {
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// f ~ U{0..F-1}, then C1 ~ U{0..C-f-1}. F <= 1 consumes no draws and masks
/// nothing; otherwise exactly two draws are taken.
FilterMask sample_mask(Rng& rng, std::size_t channels, std::size_t max_masked);

/// Band-pass sinc filters. Fixed banks hold their edges verbatim; learnable
/// banks keep raw (low, band) parameters that pass through clamp_bands.
class SincFilterBank {
 public:
  SincFilterBank() = default;
  SincFilterBank(const BandEdges& edges, std::size_t kernel_len, double sample_rate, bool learnable,
                 double min_band_hz);

  bool learnable() const { return learnable_; }
  std::size_t channels() const { return raw_low_.numel(); }
  std::size_t kernel_len() const { return window_.size(); }
  double sample_rate() const { return sample_rate_; }

  /// Current effective edges (after clamping for learnable banks).
  BandEdges edges() const;
  Tensor build_kernels() const;
  /// Learnable tensors; empty for a fixed bank.
  std::vector<Tensor> params() const;
  /// Learnable banks register raw parameters, fixed banks their edges as buffers.
  void collect(const std::string& prefix, ParamSet& out);

 private:
  Tensor raw_low_;   // f1 when fixed
  Tensor raw_band_;  // f2 when fixed
  std::vector<double> window_;
  double sample_rate_ = 16000.0;
  double min_band_ = 50.0;
  bool learnable_ = false;
};

/// First layer: sinc bank (or random Conv_0) -> maxpool(3) -> BN -> LeakyReLU.
class Frontend {
 public:
  Frontend() = default;
  Frontend(const FrontendConfig& cfg, Rng& rng);

  const FrontendConfig& config() const { return cfg_; }
  bool is_sinc() const { return cfg_.kind != FrontendKind::Conv0; }
  const SincFilterBank& bank() const { return bank_; }

  /// Kernels in use, [C, 1, K].
  Tensor kernels() const;
  std::size_t output_length(std::size_t input_length) const;

  /// wave [B, 1, L]. The mask applies only when `training` is set.
  Tensor forward(const Tensor& wave, std::optional<FilterMask> mask, bool training);

  /// Learnable filter parameters (sinc edges or Conv_0 kernels); empty for fixed banks.
  std::vector<Tensor> filter_params() const;
  /// Filter parameters plus the batch-norm that follows pooling.
  void collect(const std::string& prefix, ParamSet& out);
  /// Only the filter parameters.
  void collect_filters(const std::string& prefix, ParamSet& out);

 private:
  FrontendConfig cfg_;
  SincFilterBank bank_;
  Tensor conv0_;
  BatchNorm1d bn_;
};

}  // namespace rawpc
