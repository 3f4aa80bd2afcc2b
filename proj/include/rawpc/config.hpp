#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rawpc/model.hpp"

namespace rawpc {

struct SearchConfig {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 10;
  std::size_t batch = 14;
  double alpha_lr = 6e-4;
  double alpha_weight_decay = 1e-3;
  double w_lr = 5e-5;
  double w_weight_decay = 0.0;
};

struct ScratchConfig {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  double lr_max = 5e-5;
  double lr_min = 2e-5;
  double weight_decay = 0.0;
  bool freeze_frontend = true;
};

/// Everything a run needs. Serialised as `key = value` lines; see
/// config_keys() for the accepted keys.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  SearchConfig search;
  ScratchConfig scratch;
  std::string train_protocol;
  std::string train_wav_dir;
  std::string dev_protocol;
  std::string dev_wav_dir;
  std::string out_dir = "out";
  std::size_t workers = 1;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};
const std::vector<ConfigKey>& config_keys();

/// Applies `key = value` lines on top of `base`. Blank lines and `#`
/// comments are ignored; unknown keys and malformed values throw ConfigError.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig read_config(const std::filesystem::path& path, RunConfig base = {});
/// Every key in config_keys() order, doubles printed to round-trip precision.
std::string format_config(const RunConfig& cfg);

/// Desk-scale overrides: 4 kHz, 1 s, C = 8, 4 cells with one expand,
/// GRU 64 x 1, K_C = 2, F = 4.
RunConfig toy_config();

}  // namespace rawpc
