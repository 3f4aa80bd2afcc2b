#include "rawpc/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "rawpc/error.hpp"

namespace rawpc {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw ShapeError("uniform_int: empty range");
  // Rejection sampling on the largest multiple of n.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
  std::uint64_t x = engine_();
  while (x > limit) x = engine_();
  return x % n;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw ConfigError("rng: corrupt state string");
}

}  // namespace rawpc
