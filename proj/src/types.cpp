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

#include "mars/types.hpp"

#include "mars/error.hpp"

namespace mars {

std::string_view ModuleName(Module module) {
  return module == Module::kVisionEncoder ? "ve" : "llm";
}

Module ParseModule(std::string_view name) {
  if (name == "ve") return Module::kVisionEncoder;
  if (name == "llm") return Module::kLlm;
  throw UsageError("unknown module '" + std::string(name) +
                   "' (expected ve or llm)");
}

void ValidateRankPair(const RankPair& ranks, int r_max) {
  if (ranks.r_ve < 1 || ranks.r_llm < 1 || ranks.r_ve > r_max ||
      ranks.r_llm > r_max) {
    throw ValidationError("rank pair " + ToString(ranks) +
                          " outside [1, " + std::to_string(r_max) + "]");
  }
}

std::string ToString(const RankPair& ranks) {
  return "(" + std::to_string(ranks.r_ve) + ", " +
         std::to_string(ranks.r_llm) + ")";
}

}  // namespace mars
