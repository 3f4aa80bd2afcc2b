#include "rawpc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rawpc/error.hpp"

namespace rawpc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "-") return out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(to_size(key, trim(item)));
  return out;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SIZE_FIELD(name, member, desc)                                                               \
  Field {                                                                                            \
    {name, desc}, [](const RunConfig& c) { return std::to_string(c.member); },                      \
        [](RunConfig& c, const std::string& v) { c.member = to_size(name, v); }                      \
  }
#define DOUBLE_FIELD(name, member, desc)                                                             \
  Field {                                                                                            \
    {name, desc}, [](const RunConfig& c) { return fmt_double(c.member); },                          \
        [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); }                    \
  }
#define BOOL_FIELD(name, member, desc)                                                               \
  Field {                                                                                            \
    {name, desc}, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },      \
        [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); }                      \
  }
#define STRING_FIELD(name, member, desc)                                                             \
  Field {                                                                                            \
    {name, desc}, [](const RunConfig& c) { return c.member; },                                      \
        [](RunConfig& c, const std::string& v) { c.member = v; }                                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{{"seed", "run seed"},
            [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
      Field{{"frontend", "mel | inverse_mel | linear | conv0"},
            [](const RunConfig& c) { return std::string(frontend_kind_name(c.model.frontend.kind)); },
            [](RunConfig& c, const std::string& v) { c.model.frontend.kind = frontend_kind_from_name(v); }},
      BOOL_FIELD("frontend_learnable", model.frontend.learnable, "learn sinc band edges during search"),
      SIZE_FIELD("frontend_channels", model.frontend.channels, "number of first-layer filters"),
      SIZE_FIELD("kernel_len", model.frontend.kernel_len, "first-layer filter length"),
      DOUBLE_FIELD("sample_rate", model.frontend.sample_rate, "waveform sample rate, Hz"),
      DOUBLE_FIELD("min_band_hz", model.frontend.min_band_hz, "minimum bandwidth of learnable sinc filters"),
      SIZE_FIELD("input_length", model.input_length, "samples per utterance after duration fixing"),
      SIZE_FIELD("channels", model.channels, "C, initial channels"),
      SIZE_FIELD("cells", model.cells, "number of stacked cells"),
      Field{{"expand_positions", "0-based indices of expand cells, comma separated"},
            [](const RunConfig& c) { return fmt_list(c.model.expand_positions); },
            [](RunConfig& c, const std::string& v) { c.model.expand_positions = to_list("expand_positions", v); }},
      SIZE_FIELD("gru_hidden", model.gru_hidden, "GRU hidden size"),
      SIZE_FIELD("gru_layers", model.gru_layers, "GRU layers"),
      SIZE_FIELD("embedding_dim", model.embedding_dim, "embedding size"),
      DOUBLE_FIELD("leaky_slope", model.leaky_slope, "LeakyReLU negative slope"),
      SIZE_FIELD("k_c", model.k_c, "partial-channel factor K_C"),
      SIZE_FIELD("max_masked_filters", model.max_masked_filters, "F, filter-masking bound"),
      SIZE_FIELD("search_epochs", search.epochs, "architecture search epochs"),
      SIZE_FIELD("warmup_epochs", search.warmup_epochs, "search epochs without architecture updates"),
      SIZE_FIELD("search_batch", search.batch, "search batch size"),
      DOUBLE_FIELD("alpha_lr", search.alpha_lr, "architecture learning rate"),
      DOUBLE_FIELD("alpha_weight_decay", search.alpha_weight_decay, "architecture weight decay"),
      DOUBLE_FIELD("w_lr", search.w_lr, "network learning rate during search"),
      DOUBLE_FIELD("w_weight_decay", search.w_weight_decay, "network weight decay during search"),
      SIZE_FIELD("train_epochs", scratch.epochs, "train-from-scratch epochs"),
      SIZE_FIELD("train_batch", scratch.batch, "train-from-scratch batch size"),
      DOUBLE_FIELD("lr_max", scratch.lr_max, "initial learning rate of the cosine schedule"),
      DOUBLE_FIELD("lr_min", scratch.lr_min, "final learning rate of the cosine schedule"),
      DOUBLE_FIELD("train_weight_decay", scratch.weight_decay, "weight decay during train-from-scratch"),
      BOOL_FIELD("freeze_frontend", scratch.freeze_frontend, "keep first-layer filters fixed when training"),
      STRING_FIELD("train_protocol", train_protocol, "training protocol file"),
      STRING_FIELD("train_wav_dir", train_wav_dir, "directory of training WAV files"),
      STRING_FIELD("dev_protocol", dev_protocol, "development protocol file"),
      STRING_FIELD("dev_wav_dir", dev_wav_dir, "directory of development WAV files"),
      STRING_FIELD("out_dir", out_dir, "default output directory"),
      SIZE_FIELD("workers", workers, "parallel WAV decoders"),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (search.warmup_epochs > search.epochs) throw ConfigError("warmup_epochs exceeds search_epochs");
  if (search.batch == 0 || scratch.batch == 0) throw ConfigError("batch sizes must be positive");
  if (scratch.lr_min > scratch.lr_max) throw ConfigError("lr_min exceeds lr_max");
  if (model.frontend.sample_rate <= 0.0) throw ConfigError("sample_rate must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(std::string_view text, RunConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (f.key.name == key) {
        try {
          f.set(cfg, value);
        } catch (const ConfigError& e) {
          throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& f : fields()) s += f.key.name + " = " + f.get(cfg) + "\n";
  return s;
}

RunConfig toy_config() {
  RunConfig c;
  c.model.frontend.kind = FrontendKind::SincMel;
  c.model.frontend.channels = 16;
  c.model.frontend.kernel_len = 128;
  c.model.frontend.sample_rate = 4000.0;
  c.model.input_length = 4000;
  c.model.channels = 8;
  c.model.cells = 4;
  c.model.expand_positions = {2};
  c.model.gru_hidden = 64;
  c.model.gru_layers = 1;
  c.model.embedding_dim = 64;
  c.model.k_c = 2;
  c.model.max_masked_filters = 4;
  c.search.epochs = 6;
  c.search.warmup_epochs = 2;
  c.search.batch = 16;
  c.search.w_lr = 1e-3;
  c.search.alpha_lr = 6e-4;
  c.scratch.epochs = 15;
  c.scratch.batch = 16;
  c.scratch.lr_max = 2e-3;
  c.scratch.lr_min = 5e-4;
  return c;
}

}  // namespace rawpc
