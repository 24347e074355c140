/*
 * Copyright 2026 The MARS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MARS_PHILOX_HPP_
#define MARS_PHILOX_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mars {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
// every draw is a pure function of (key, counter), so simulated runs can be
// generated in any order.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter Block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

// Draws keyed by a 64-bit seed and addressed by (stream, index).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)} {}

  Philox4x32::Counter Raw(std::uint64_t stream, std::uint64_t index) const {
    return Philox4x32::Block(
        {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
         static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
        key_);
  }

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double Uniform(std::uint64_t stream, std::uint64_t index) const {
    const auto r = Raw(stream, index);
    return ToUnit(r[0], r[1]);
  }

  // Standard normal via Box-Muller on the two halves of one block.
  double Normal(std::uint64_t stream, std::uint64_t index) const {
    const auto r = Raw(stream, index);
    const double u1 = ToUnit(r[0], r[1]);
    const double u2 = ToUnit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static double ToUnit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        ((std::uint64_t{hi} << 32) | lo) >> 11;  // 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
};

// SplitMix64 finalizer, used to fold identifiers into stream numbers.
constexpr std::uint64_t MixBits(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace mars

#endif  // MARS_PHILOX_HPP_
