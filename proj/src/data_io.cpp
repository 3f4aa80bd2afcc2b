#include "rawpc/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "rawpc/error.hpp"

namespace rawpc {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view key_name(int label) { return label == 0 ? "bonafide" : "spoof"; }

int key_from_name(std::string_view key) {
  if (key == "bonafide") return 0;
  if (key == "spoof") return 1;
  throw DataError("unknown key '" + std::string(key) + "' (expected bonafide or spoof)");
}

std::vector<double> load_wav(const std::filesystem::path& path, std::uint32_t sample_rate) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw DataError(name + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError(name + ": truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(name + ": fmt chunk too short");
      const std::uint16_t format = read_u16(p + body);
      const std::uint16_t channels = read_u16(p + body + 2);
      const std::uint32_t rate = read_u32(p + body + 4);
      const std::uint16_t bits = read_u16(p + body + 14);
      if (format != 1) throw DataError(name + ": unsupported codec (format tag " + std::to_string(format) + ", need PCM)");
      if (channels != 1) throw DataError(name + ": expected mono, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw DataError(name + ": expected 16-bit samples, got " + std::to_string(bits));
      if (rate != sample_rate) {
        throw DataError(name + ": sample rate " + std::to_string(rate) + " Hz, expected " + std::to_string(sample_rate));
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError(name + ": data chunk before fmt chunk");
      if (size == 0) throw DataError(name + ": empty data chunk");
      std::vector<double> out(size / 2);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(p + body + 2 * i));
        out[i] = static_cast<double>(v) / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw DataError(name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate) {
  std::string s;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  s += "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, sample_rate);
  put_u32(s, sample_rate * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (double x : samples) {
    const double q = std::clamp(std::nearbyint(x * 32768.0), -32768.0, 32767.0);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::vector<double> fix_duration(std::span<const double> samples, std::size_t target) {
  if (samples.empty()) throw DataError("fix_duration: empty signal");
  std::vector<double> out(target);
  for (std::size_t i = 0; i < target; ++i) out[i] = samples[i % samples.size()];
  return out;
}

std::vector<ProtocolEntry> parse_protocol_text(std::string_view text) {
  std::vector<ProtocolEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 5) {
      throw DataError("protocol line " + std::to_string(lineno) + ": expected 5 fields, got " + std::to_string(f.size()));
    }
    ProtocolEntry e{f[0], f[1], f[3], 0};
    try {
      e.label = key_from_name(f[4]);
    } catch (const DataError& err) {
      throw DataError("protocol line " + std::to_string(lineno) + ": " + err.what());
    }
    if ((e.attack_id == "-") != (e.label == 0)) {
      throw DataError("protocol line " + std::to_string(lineno) + ": attack '" + e.attack_id +
                      "' inconsistent with key " + f[4]);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ProtocolEntry> parse_protocol(const std::filesystem::path& path) {
  return parse_protocol_text(read_file(path));
}

std::string format_protocol(std::span<const ProtocolEntry> entries) {
  std::string s;
  for (const auto& e : entries) {
    s += e.speaker + " " + e.utterance_id + " - " + e.attack_id + " " + std::string(key_name(e.label)) + "\n";
  }
  return s;
}

void write_protocol(const std::filesystem::path& path, std::span<const ProtocolEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_protocol(entries);
}

std::size_t SynthConfig::num_samples() const {
  return static_cast<std::size_t>(std::llround(sample_rate * duration_s));
}

std::vector<Utterance> synth_task(Rng& rng, std::size_t n_per_class, const SynthConfig& cfg) {
  constexpr int kHarmonics = 5;
  const std::size_t n = cfg.num_samples();
  if (n == 0) throw ConfigError("synth_task: zero-length utterances");
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<Utterance> out;
  out.reserve(2 * n_per_class);
  std::size_t spoof_count = 0;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    Utterance u;
    u.label = static_cast<int>(i % 2);
    const std::size_t k = i / 2;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05zu", u.label == 0 ? "bona" : "spoof", k);
    u.id = id;
    if (u.label == 1) u.attack_id = "A0" + std::to_string(1 + spoof_count++ % 3);

    const double f0 = rng.uniform(80.0, 300.0);
    std::array<double, kHarmonics> phase{}, factor{};
    for (auto& p : phase) p = rng.uniform(0.0, two_pi);
    for (auto& f : factor) f = rng.uniform(1.02, 1.08);

    u.samples.assign(n, 0.0);
    double power = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double time = static_cast<double>(t) / cfg.sample_rate;
      double v = 0.0;
      for (int h = 1; h <= kHarmonics; ++h) {
        const double freq = h * f0 * (u.label == 1 ? factor[h - 1] : 1.0);
        v += std::sin(two_pi * freq * time + phase[h - 1]) / h;
      }
      u.samples[t] = v;
      power += v * v;
    }
    power /= static_cast<double>(n);
    const double noise_sd = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
    double peak = 0.0;
    for (double& v : u.samples) {
      v += noise_sd * rng.normal();
      peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.9)
      for (double& v : u.samples) v *= 0.9 / peak;
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Utterance> load_dataset(std::span<const ProtocolEntry> protocol, const std::filesystem::path& wav_dir,
                                    std::size_t length, std::uint32_t sample_rate, std::size_t workers) {
  std::vector<Utterance> out(protocol.size());
  std::vector<std::string> errors(protocol.size());
  auto load_one = [&](std::size_t i) {
    const auto& e = protocol[i];
    try {
      out[i].id = e.utterance_id;
      out[i].label = e.label;
      out[i].attack_id = e.attack_id;
      out[i].samples = fix_duration(load_wav(wav_dir / (e.utterance_id + ".wav"), sample_rate), length);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, protocol.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < protocol.size(); ++i) load_one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < protocol.size(); i += workers) load_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw DataError(err);
  return out;
}

void export_dataset(const std::filesystem::path& dir, std::span<const Utterance> data, std::uint32_t sample_rate) {
  std::filesystem::create_directories(dir);
  std::vector<ProtocolEntry> entries;
  for (const auto& u : data) {
    write_wav(dir / (u.id + ".wav"), u.samples, sample_rate);
    entries.push_back({u.label == 0 ? "SYN_B" : "SYN_S", u.id, u.attack_id, u.label});
  }
  write_protocol(dir / "protocol.txt", entries);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Batcher::Batcher(std::size_t size, std::size_t batch_size, bool drop_last)
    : size_(size), batch_(batch_size), drop_last_(drop_last) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::vector<std::vector<std::size_t>> Batcher::chunk(const std::vector<std::size_t>& order) const {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_) {
    const std::size_t end = std::min(order.size(), i + batch_);
    if (drop_last_ && end - i < batch_) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> Batcher::epoch(Rng& rng) const {
  std::vector<std::size_t> order(size_);
  for (std::size_t i = 0; i < size_; ++i) order[i] = i;
  for (std::size_t i = size_; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  return chunk(order);
}

std::vector<std::vector<std::size_t>> Batcher::sequential() const {
  std::vector<std::size_t> order(size_);
  for (std::size_t i = 0; i < size_; ++i) order[i] = i;
  return chunk(order);
}

Batch make_batch(std::span<const Utterance> data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("make_batch: empty batch");
  const std::size_t len = data[indices[0]].samples.size();
  Batch b;
  b.wave = Tensor::zeros({indices.size(), 1, len});
  auto w = b.wave.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= data.size()) throw ShapeError("make_batch: index out of range");
    const auto& u = data[indices[k]];
    if (u.samples.size() != len) throw ShapeError("make_batch: utterance " + u.id + " has a different length");
    std::copy(u.samples.begin(), u.samples.end(), w.begin() + static_cast<std::ptrdiff_t>(k * len));
    b.labels.push_back(u.label);
  }
  return b;
}

}  // namespace rawpc
