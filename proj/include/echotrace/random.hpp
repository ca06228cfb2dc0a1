/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The echotrace Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ECHOTRACE_RANDOM_HPP
#define ECHOTRACE_RANDOM_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace echotrace {

// Salmon et al. SC 2011. Parallel random numbers: as easy as 1, 2, 3.
// Philox4x32 with 10 rounds.
class Philox4x32 {
 public:
  using Counter = std::array<uint32_t, 4>;
  using Key = std::array<uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kW32A;
      key[1] += kW32B;
    }
    return ctr;
  }

 private:
  static constexpr uint32_t kW32A = 0x9E3779B9;
  static constexpr uint32_t kW32B = 0xBB67AE85;
  static constexpr uint32_t kM4x32A = 0xD2511F53;
  static constexpr uint32_t kM4x32B = 0xCD9E8D57;

  static void mulhilo(uint32_t a, uint32_t b, uint32_t& lo, uint32_t& hi) {
    const uint64_t product = static_cast<uint64_t>(a) * b;
    lo = static_cast<uint32_t>(product);
    hi = static_cast<uint32_t>(product >> 32);
  }

  static Counter single_round(const Counter& ctr, const Key& key) {
    uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kM4x32A, ctr[0], lo0, hi0);
    mulhilo(kM4x32B, ctr[2], lo1, hi1);
    return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
};

/// SplitMix64 finalizer, used to derive child seeds.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr uint64_t combine_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  return mix64(mix64(seed ^ mix64(a + 0x632BE59BD9B4E019ull)) ^ mix64(b + 0x8CB92BA72F3D8DD7ull));
}

/**
 * Counter-based stream of random numbers.
 *
 * The stream is a pure function of (seed, a, b, c): the n-th draw of a stream never depends on
 * which thread produces it or on how many other streams were consumed.
 */
class RandomStream {
 public:
  RandomStream(uint64_t seed, uint32_t a, uint32_t b = 0, uint32_t c = 0)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)}, stream_{a, b, c} {}

  uint64_t next_u64() {
    if (cursor_ >= 2) refill();
    const uint64_t v = (static_cast<uint64_t>(block_[2 * cursor_]) << 32) | block_[2 * cursor_ + 1];
    ++cursor_;
    return v;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1).
  double uniform_open() { return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

  /// Standard normal via Box-Muller; consumes two uniforms.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  void refill() {
    block_ = Philox4x32::generate({draw_++, stream_[2], stream_[1], stream_[0]}, key_);
    cursor_ = 0;
  }

  Philox4x32::Key key_;
  std::array<uint32_t, 3> stream_;
  uint32_t draw_ = 0;
  Philox4x32::Counter block_{};
  int cursor_ = 2;
};

}  // namespace echotrace

#endif /* ECHOTRACE_RANDOM_HPP */
