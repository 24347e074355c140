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

#ifndef MARS_TYPES_HPP_
#define MARS_TYPES_HPP_

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace mars {

inline constexpr int kDefaultMaxRank = 256;

// The two adapted modules. The projector is folded into the vision encoder.
enum class Module { kVisionEncoder, kLlm };

std::string_view ModuleName(Module module);  // "ve" / "llm"
Module ParseModule(std::string_view name);

// LoRA ranks of the vision encoder (+ projector) and of the LLM backbone.
struct RankPair {
  int r_ve = 1;
  int r_llm = 1;

  friend auto operator<=>(const RankPair&, const RankPair&) = default;
};

// Throws ValidationError unless 1 <= r <= r_max for both ranks.
void ValidateRankPair(const RankPair& ranks, int r_max = kDefaultMaxRank);

std::string ToString(const RankPair& ranks);

}  // namespace mars

#endif  // MARS_TYPES_HPP_
