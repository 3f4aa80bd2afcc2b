#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rawpc/tensor.hpp"

namespace rawpc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ArrayEntry {
  Shape shape;
  std::vector<double> data;
  bool operator==(const ArrayEntry&) const = default;
};

/// Named entries written in name order, so equal contents give equal bytes.
///
/// Layout (little-endian):
///   "RPCDCKPT" u32 version u64 count
///   per entry: u32 name_len name u8 type payload
///     type 0 array:  u32 rank, u64 dims[rank], f64 data[prod(dims)]
///     type 1 text:   u64 len, bytes
///     type 2 int:    i64
class Checkpoint {
 public:
  using Entry = std::variant<ArrayEntry, std::string, std::int64_t>;

  void set_array(const std::string& name, Shape shape, std::span<const double> data);
  void set_text(const std::string& name, std::string text);
  void set_int(const std::string& name, std::int64_t v);
  void set_double(const std::string& name, double v) { set_array(name, {1}, std::span<const double>(&v, 1)); }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const ArrayEntry& array(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  double scalar(const std::string& name) const;

  /// Names starting with `prefix`, in order.
  std::vector<std::string> names(std::string_view prefix = {}) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace rawpc
