#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "sage/linalg.hpp"

namespace sage {

// Counter-based generator (Philox4x32-10).
//
// The 64-bit master seed is the Philox key. The 128-bit counter is split into
// (block index : low 64 bits, stream id : high 64 bits), so every stream owns a
// disjoint slice of the counter space of the same keyed permutation. Output of
// block b in stream s is Philox(key = seed, counter = (b, s)); two uint64 words
// come out of every block.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  // Number of 64-bit words consumed so far.
  std::uint64_t position() const { return position_; }

  // Fresh generator for a sub-task. Keeps the key, remaps the stream id
  // through a splitmix64 finalizer so nested splits do not collide in practice.
  Rng split(std::uint64_t child) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [lo, hi], inclusive, unbiased.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

  // Count of gaussian() vector draws served by this generator.
  std::uint64_t gaussian_draws() const { return gaussian_draws_; }
  void note_gaussian_draw() { ++gaussian_draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  std::uint64_t gaussian_draws_ = 0;
};

// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// n independent standard normal draws (Box-Muller, pairs; the spare of an odd
// tail is discarded so each call is self-contained).
Vector gaussian(Rng& rng, std::size_t n);

}  // namespace sage
