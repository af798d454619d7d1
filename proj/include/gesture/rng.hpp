// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace gesture {

/// xoshiro256** generator seeded through SplitMix64.
///
/// The algorithm and its constants are fixed so that every seeded result in
/// this project (weight init, shuffles, synthetic images) is reproducible on
/// any platform. `std::` distributions are deliberately not used on top of it
/// because their output is implementation-defined.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be > 0. Lemire rejection, unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (no cached second value, so the stream
  /// position depends only on the number of calls).
  double normal();

  /// Independent child stream; advances this generator by one draw.
  Rng split();

  const State& state() const noexcept { return s_; }
  static Rng from_state(const State& s);

  friend bool operator==(const Rng& a, const Rng& b) { return a.s_ == b.s_; }

 private:
  State s_{};
};

/// SplitMix64 finalizer, also used to derive seeds.
std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace gesture
