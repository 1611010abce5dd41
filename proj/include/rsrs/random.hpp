#pragma once

#include "rsrs/common.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rsrs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the k-th variate of stream (seed, stream) is a pure
/// function of (seed, stream, k). The key is splitmix64(seed ^ splitmix64(stream)),
/// and the k-th raw word is splitmix64(key + k). Normals come from Box-Muller on
/// consecutive pairs of uniforms, so variate 2q uses the cosine branch and 2q+1
/// the sine branch of pair q.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(splitmix64(seed ^ splitmix64(stream ^ 0x5851f42d4c957f2dULL))) {}

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    const std::uint64_t bits = splitmix64(key_ + counter) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t index) const {
    const std::uint64_t pair = index >> 1;
    const double u1 = uniform(2 * pair);
    const double u2 = uniform(2 * pair + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (index & 1) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

 private:
  std::uint64_t key_;
};

/// Standard normal matrix; entry (i, j) is variate j * rows + i of the stream.
inline Matrix draw_gaussian(Index rows, Index cols, std::uint64_t seed, std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      out(i, j) = rng.normal(static_cast<std::uint64_t>(j * rows + i));
  return out;
}

}  // namespace rsrs
