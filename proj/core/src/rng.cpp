#include "mvkd/rng.hpp"

#include <cmath>

namespace mvkd {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s ^= b + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return splitmix64(s);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

Rng Rng::stream(std::string_view name) const {
  std::uint64_t h = seed_;
  for (char c : name) h = mix_seed(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return Rng(h);
}

Rng Rng::stream(std::string_view name, std::uint64_t a, std::uint64_t b) const {
  std::uint64_t h = stream(name).seed_;
  h = mix_seed(h, a);
  h = mix_seed(h, b);
  return Rng(h);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) {
  return a + (b - a) * next_double();
}

double Rng::normal(double mu, double sigma) {
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::truncated_normal(double mu, double sigma) {
  if (sigma == 0.0) return mu;
  for (;;) {
    double x = normal(mu, sigma);
    if (std::abs(x - mu) <= 2.0 * sigma) return x;
  }
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Multiply-shift mapping; bias is < 2^-64 * n, irrelevant at our scales
  // and fully deterministic.
  unsigned __int128 product = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(product >> 64);
}

}  // namespace mvkd
