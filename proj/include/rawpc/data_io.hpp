#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rawpc/rng.hpp"
#include "rawpc/tensor.hpp"

namespace rawpc {

struct Utterance {
  std::string id;
  std::vector<double> samples;
  int label = 0;                 ///< 0 bona fide, 1 spoof
  std::string attack_id = "-";  ///< "-" for bona fide
};

std::string_view key_name(int label);
/// "bonafide" -> 0, "spoof" -> 1; anything else throws DataError.
int key_from_name(std::string_view key);

/// Reads a RIFF/WAVE PCM16 mono file. Samples are scaled by 1/32768.
/// Any other codec, bit depth, channel count or sample rate is rejected.
std::vector<double> load_wav(const std::filesystem::path& path, std::uint32_t sample_rate = 16000);
/// Writes PCM16 mono; samples are scaled by 32768, rounded and clipped.
void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate);

/// Truncates to `target` samples, or tiles the signal until it is long enough.
std::vector<double> fix_duration(std::span<const double> samples, std::size_t target = 64000);

struct ProtocolEntry {
  std::string speaker;
  std::string utterance_id;
  std::string attack_id;
  int label = 0;
  bool operator==(const ProtocolEntry&) const = default;
};

/// Lines `SPEAKER UTT_ID - ATTACK KEY`; blank lines are skipped.
std::vector<ProtocolEntry> parse_protocol_text(std::string_view text);
std::vector<ProtocolEntry> parse_protocol(const std::filesystem::path& path);
std::string format_protocol(std::span<const ProtocolEntry> entries);
void write_protocol(const std::filesystem::path& path, std::span<const ProtocolEntry> entries);

struct SynthConfig {
  double sample_rate = 16000.0;
  double duration_s = 4.0;
  double snr_db = 20.0;
  std::size_t num_samples() const;
};

/// Harmonic test signals: n_per_class bona fide and n_per_class spoof
/// utterances, interleaved (bona fide first). Each utterance draws, in order:
/// f0 (1 value), 5 phases, 5 inharmonicity factors (drawn for both classes,
/// applied to spoof only), then one normal per sample for the noise.
std::vector<Utterance> synth_task(Rng& rng, std::size_t n_per_class, const SynthConfig& cfg = {});

/// Loads the utterances listed in a protocol from `wav_dir/<id>.wav`, fixing
/// each to `length` samples. With workers > 1, files are decoded in parallel
/// but the result keeps protocol order.
std::vector<Utterance> load_dataset(std::span<const ProtocolEntry> protocol, const std::filesystem::path& wav_dir,
                                    std::size_t length, std::uint32_t sample_rate, std::size_t workers = 1);

/// Writes every utterance as `<dir>/<id>.wav` plus `<dir>/protocol.txt`.
void export_dataset(const std::filesystem::path& dir, std::span<const Utterance> data, std::uint32_t sample_rate);

/// 64-bit FNV-1a, used for dataset digests.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Per-epoch shuffled batches of dataset indices.
class Batcher {
 public:
  Batcher(std::size_t size, std::size_t batch_size, bool drop_last = false);
  /// Fisher-Yates shuffle (size - 1 draws) followed by chunking.
  std::vector<std::vector<std::size_t>> epoch(Rng& rng) const;
  /// Unshuffled chunks, for evaluation.
  std::vector<std::vector<std::size_t>> sequential() const;

 private:
  std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order) const;
  std::size_t size_, batch_;
  bool drop_last_;
};

struct Batch {
  Tensor wave;  ///< [B, 1, L]
  std::vector<int> labels;
};

/// Stacks the selected utterances; all must have the same length.
Batch make_batch(std::span<const Utterance> data, std::span<const std::size_t> indices);

}  // namespace rawpc
