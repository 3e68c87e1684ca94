#include "m3d/rng.hpp"

#include <cmath>
#include <numbers>

namespace m3d {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    word = splitmix64(x);
    x += kGolden;
  }
}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t key = splitmix64(seed);
  std::uint64_t index = 1;
  for (const std::uint64_t tag : tags) {
    key = splitmix64(key ^ splitmix64(tag + index * kGolden));
    ++index;
  }
  return Rng(key);
}

Rng Rng::stream(std::uint64_t seed, Stream purpose,
                std::initializer_list<std::uint64_t> tags) {
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ splitmix64(static_cast<std::uint64_t>(purpose) + kGolden));
  std::uint64_t index = 2;
  for (const std::uint64_t tag : tags) {
    key = splitmix64(key ^ splitmix64(tag + index * kGolden));
    ++index;
  }
  return Rng(key);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection on the top of the range keeps every residue equally likely.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

template <typename T>
Tensor<T> gaussian_draw(Rng& rng, Shape shape, T mean, T std) {
  if (!(std >= T(0)))
    throw NumericError("gaussian_draw: standard deviation must be >= 0");
  Tensor<T> out(std::move(shape));
  for (auto& v : out.data()) v = mean + std * static_cast<T>(rng.normal());
  return out;
}

template Tensor<float> gaussian_draw<float>(Rng&, Shape, float, float);
template Tensor<double> gaussian_draw<double>(Rng&, Shape, double, double);

}  // namespace m3d
