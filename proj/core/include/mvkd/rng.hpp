#pragma once

#include <cstdint>
#include <string_view>

namespace mvkd {

// Deterministic random source used everywhere randomness is needed.
//
// Generator: xoshiro256** (Blackman & Vigna), state expanded from the seed
// with SplitMix64. Both algorithms are fully specified over uint64, so the
// sequence for a given seed is identical on every platform, unlike the
// unspecified std::<distribution> implementations.
//
// Streams: `stream(name)` / `stream(name, a, b)` derive an independent child
// generator by hashing the parent seed with the stream name and indices.
// Consumers each take their own stream ("init", "shuffle", "synth", ...) so
// adding draws to one consumer never shifts another's sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng stream(std::string_view name) const;
  Rng stream(std::string_view name, std::uint64_t a, std::uint64_t b = 0) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_double();

  // Uniform in [a, b).
  double uniform(double a, double b);

  // Gaussian via Box-Muller (two uniform draws per sample, no cached spare).
  double normal(double mu, double sigma);

  // Gaussian resampled until within [mu - 2*sigma, mu + 2*sigma].
  double truncated_normal(double mu, double sigma);

  // Uniform integer in [0, n), n >= 1. Rejection-free scaling (Lemire).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

// SplitMix64 single step; exposed because dataset code derives per-image
// seeds with it directly.
std::uint64_t splitmix64(std::uint64_t& state);

// Hash a sequence of words into one seed (order-sensitive).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace mvkd
