#include "agesel/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "agesel/error.hpp"

namespace agesel {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : key_(seed), engine_(splitmix64(seed)) {}

RandomStream RandomStream::derive(std::initializer_list<std::uint64_t> words) const {
  std::uint64_t h = splitmix64(key_);
  for (std::uint64_t w : words) {
    h = splitmix64(h ^ splitmix64(w));
  }
  return RandomStream(h);
}

RandomStream RandomStream::derive(StreamPurpose purpose, std::initializer_list<std::uint64_t> words) const {
  std::uint64_t h = splitmix64(key_ ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  for (std::uint64_t w : words) {
    h = splitmix64(h ^ splitmix64(w));
  }
  return RandomStream(h);
}

double RandomStream::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
  if (n == 0) {
    throw ConfigError("uniform_index: empty range");
  }
  // Rejection sampling on the largest multiple of n below 2^64.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return x % n;
}

double RandomStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::gamma(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw ConfigError("gamma: shape must be positive and finite");
  }
  if (shape < 1.0) {
    // Boost from shape + 1: X * U^(1/shape).
    const double u = 1.0 - uniform01();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) {
      return d * v;
    }
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

}  // namespace agesel
