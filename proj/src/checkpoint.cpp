#include "rawpc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rawpc/error.hpp"

namespace rawpc {

namespace {

constexpr char kMagic[8] = {'R', 'P', 'C', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ConfigError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::set_array(const std::string& name, Shape shape, std::span<const double> data) {
  if (shape_numel(shape) != data.size()) throw ShapeError("checkpoint entry " + name + ": shape does not match data");
  entries_[name] = ArrayEntry{std::move(shape), std::vector<double>(data.begin(), data.end())};
}

void Checkpoint::set_text(const std::string& name, std::string text) { entries_[name] = std::move(text); }
void Checkpoint::set_int(const std::string& name, std::int64_t v) { entries_[name] = v; }

const ArrayEntry& Checkpoint::array(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<ArrayEntry>(it->second)) {
    throw ConfigError("checkpoint has no array entry '" + name + "'");
  }
  return std::get<ArrayEntry>(it->second);
}

const std::string& Checkpoint::text(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::string>(it->second)) {
    throw ConfigError("checkpoint has no text entry '" + name + "'");
  }
  return std::get<std::string>(it->second);
}

std::int64_t Checkpoint::integer(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::int64_t>(it->second)) {
    throw ConfigError("checkpoint has no integer entry '" + name + "'");
  }
  return std::get<std::int64_t>(it->second);
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& a = array(name);
  if (a.data.size() != 1) throw ConfigError("checkpoint entry '" + name + "' is not a scalar");
  return a.data[0];
}

std::vector<std::string> Checkpoint::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(std::string(prefix)); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, entries_.size());
  for (const auto& [name, entry] : entries_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    if (const auto* a = std::get_if<ArrayEntry>(&entry)) {
      put<std::uint8_t>(out, 0);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(a->shape.size()));
      for (std::size_t d : a->shape) put<std::uint64_t>(out, d);
      for (double v : a->data) put<double>(out, v);
    } else if (const auto* s = std::get_if<std::string>(&entry)) {
      put<std::uint8_t>(out, 1);
      put<std::uint64_t>(out, s->size());
      out += *s;
    } else {
      put<std::uint8_t>(out, 2);
      put<std::int64_t>(out, std::get<std::int64_t>(entry));
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) throw ConfigError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto type = r.get<std::uint8_t>();
    if (type == 0) {
      ArrayEntry a;
      const auto rank = r.get<std::uint32_t>();
      for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      a.data.resize(shape_numel(a.shape));
      for (double& v : a.data) v = r.get<double>();
      ck.entries_[name] = std::move(a);
    } else if (type == 1) {
      const auto len = r.get<std::uint64_t>();
      ck.entries_[name] = std::string(r.take(static_cast<std::size_t>(len)));
    } else if (type == 2) {
      ck.entries_[name] = r.get<std::int64_t>();
    } else {
      throw ConfigError("checkpoint entry '" + name + "' has unknown type " + std::to_string(type));
    }
  }
  if (!r.done()) throw ConfigError("checkpoint has trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace rawpc
