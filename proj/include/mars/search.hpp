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

#ifndef MARS_SEARCH_HPP_
#define MARS_SEARCH_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mars/laws.hpp"
#include "mars/simulator.hpp"
#include "mars/telemetry.hpp"
#include "mars/types.hpp"

namespace mars {

struct SearchConfig {
  std::vector<int> r_options{8, 16, 32, 64};
  std::int64_t d_target = 8192;
  int r_min = 1;
  int r_max = kDefaultMaxRank;
};

void Validate(const SearchConfig& config);

// Continuous VE rank whose predicted convergence time equals the LLM's at
// d_target, or nullopt (the fallback) when
//   k_l r_llm^gamma_l D^delta_l + E_llm - E_ve <= 0.
// Throws NumericRangeError on a non-finite intermediate.
std::optional<double> BalancedVeRank(const LawCCoefficients& c_ve,
                                     const LawCCoefficients& c_llm, int r_llm,
                                     double d_target);

struct RoundedRank {
  int rank = 0;
  bool clamped = false;
};

// Nearest integer, halves rounded up, then clamped to [r_min, r_max].
RoundedRank RoundRank(double continuous, int r_min, int r_max);

struct Candidate {
  RankPair ranks;
  std::optional<double> r_ve_continuous;  // absent on fallback
  bool fallback_used = false;
  bool clamped = false;
  double predicted_t_ve = 0.0;
  double predicted_t_llm = 0.0;
  double predicted_loss = 0.0;  // filled by SelectBest
};

struct SearchResult {
  std::vector<Candidate> candidates;
  RankPair chosen;
  double chosen_predicted_loss = 0.0;
  double fallback_rate = 0.0;
  std::int64_t d_target = 0;
};

// One candidate per r_llm in config.r_options, in that order.
std::vector<Candidate> GenerateCandidates(const LawCCoefficients& c_ve,
                                          const LawCCoefficients& c_llm,
                                          const SearchConfig& config);

// Index of the smallest predicted_loss; ties go to the smaller r_llm, then
// the smaller r_ve. Throws ArgumentError when empty.
std::size_t ArgminCandidate(std::span<const Candidate> candidates);

SearchResult SelectBest(std::vector<Candidate> candidates,
                        const LawPCoefficients& c_p, double d_target);

struct MarsOutcome {
  SearchResult result;
  LawPFit law_p;
  LawCFit law_c_ve;
  LawCFit law_c_llm;
};

// Fits Law-C for both modules and Law-P, then prunes and selects. Fit errors
// are rethrown with the failing stage ("law_c_ve", "law_c_llm", "law_p")
// prefixed to the message.
MarsOutcome MarsSearch(const CalibrationDataset& dataset,
                       const SearchConfig& config, const FitConfig& fit_config);

struct NaiveOutcome {
  RankPair best;
  int runs = 0;
  double total_steps = 0.0;
  std::vector<SimRunOutput> outputs;
};

// One simulated full fine-tuning per grid pair; the best pair has the lowest
// noiseless final perplexity (same tie-break as the oracle).
NaiveOutcome NaiveSearch(const SimConfig& sim, std::span<const int> r_options,
                         std::int64_t d_target);

struct CostReport {
  int naive_runs = 0;
  double naive_steps = 0.0;
  double mars_calibration_steps = 0.0;
  double mars_final_steps = 0.0;
  double speedup = 0.0;
  bool shared_backbone_mode = false;
  int parallel_heads = 1;
};

// Calibration cost is the sum of run steps, divided by `parallel_heads` in
// shared-backbone mode (one backbone pass feeds every adapter head). Throws
// ArgumentError on non-positive step counts.
CostReport MakeCostReport(double naive_steps, int naive_runs,
                          std::span<const double> calibration_run_steps,
                          double final_run_steps, bool shared_backbone,
                          int parallel_heads = 1);

}  // namespace mars

#endif  // MARS_SEARCH_HPP_
