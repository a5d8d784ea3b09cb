#include "irfkit/random_stream.hpp"

#include <cmath>
#include <numbers>

namespace irfkit {

double RandomStream::normal() noexcept {
  // 1 - u keeps the logarithm argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RandomStream::below(std::uint64_t n) noexcept {
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t r = next_u64();
  while (r >= limit) {
    r = next_u64();
  }
  return r % n;
}

}  // namespace irfkit
