#pragma once

#include <cstdint>
#include <vector>

#include "rawpc/config.hpp"
#include "rawpc/data_io.hpp"

namespace rawpc::testing {

/// A very small model and schedule for fast trainer tests: 0.15 s at 4 kHz,
/// 8 sinc filters, C = 4, two cells with one expand, GRU 8.
RunConfig micro_config();

struct SplitData {
  std::vector<Utterance> train, dev, eval;
};

/// Interleaved synthetic data at the configuration's sample rate and input length.
SplitData synth_splits(const RunConfig& cfg, std::uint64_t seed, std::size_t train_per_class,
                       std::size_t dev_per_class, std::size_t eval_per_class);

}  // namespace rawpc::testing
