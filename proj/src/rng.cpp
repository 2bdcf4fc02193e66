#include "sage/rng.hpp"

#include <cmath>
#include <numbers>

#include "sage/error.hpp"

namespace sage {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng Rng::split(std::uint64_t child) const {
  return Rng(seed_, splitmix64(stream_ ^ splitmix64(child)));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t block = position_ >> 1;
  const auto out = philox4x32(
      {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
      {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  const std::size_t half = static_cast<std::size_t>(position_ & 1u) * 2;
  ++position_;
  return (static_cast<std::uint64_t>(out[half + 1]) << 32) | out[half];
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  require(lo <= hi, "uniform_int: empty range");
  const std::uint64_t span = hi - lo;
  if (span == ~0ull) return next_u64();
  const std::uint64_t range = span + 1;
  // Rejection on the top of the 64-bit range keeps the draw unbiased.
  const std::uint64_t rem = ((~0ull % range) + 1) % range;  // 2^64 mod range
  const std::uint64_t limit = ~0ull - rem;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x > limit);
  return lo + x % range;
}

Vector gaussian(Rng& rng, std::size_t n) {
  Vector out(n);
  for (std::size_t i = 0; i < n; i += 2) {
    // 1 - u in (0, 1] keeps the log finite.
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(theta);
    if (i + 1 < n) out[i + 1] = r * std::sin(theta);
  }
  rng.note_gaussian_draw();
  return out;
}

}  // namespace sage
