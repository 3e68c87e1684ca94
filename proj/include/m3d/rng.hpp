#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

#include "m3d/tensor.hpp"

namespace m3d {

// Named purposes for stream splitting. Values are part of the reproducibility
// contract: changing one changes every downstream draw.
enum class Stream : std::uint64_t {
  encoder_init = 1,
  real_batch = 2,
  synthetic_init = 3,
  train_shuffle = 4,
  train_init = 5,
  selection = 6,
  mixture = 7,
  diagnostic = 8,
  evaluation = 9,
};

// xoshiro256** seeded through splitmix64.
//
// Stream-split rule: Rng::stream(seed, {t0, t1, ...}) starts from
// k = splitmix64(seed) and folds each tag in order as
// k = splitmix64(k ^ splitmix64(t_i + (i + 1) * 0x9E3779B97F4A7C15)); the
// resulting key seeds a fresh generator. Streams are therefore a pure
// function of (seed, tag sequence) and independent of call order elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);
  static Rng stream(std::uint64_t seed, Stream purpose,
                    std::initializer_list<std::uint64_t> tags = {});

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, bound); bound > 0. Unbiased (rejection).
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller; the second variate of each pair is kept
  // for the next call.
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// i.i.d. N(mean, std^2) values; std must be non-negative.
template <typename T>
Tensor<T> gaussian_draw(Rng& rng, Shape shape, T mean, T std);

}  // namespace m3d
