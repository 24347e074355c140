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

#ifndef MARS_SIMULATOR_HPP_
#define MARS_SIMULATOR_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mars/laws.hpp"
#include "mars/telemetry.hpp"
#include "mars/types.hpp"

namespace mars {

// Ground truth for synthetic fine-tuning runs.
struct SimConfig {
  LawPCoefficients true_law_p;
  LawCCoefficients true_law_c_ve{Module::kVisionEncoder};
  LawCCoefficients true_law_c_llm{Module::kLlm};
  double gap_penalty_lambda = 0.3;
  double gap_penalty_power = 1.0;
  double noise_sigma_log = 0.02;
  double conv_noise_sigma_log = 0.02;
  std::int64_t batch_size = 8;
  std::int64_t eval_interval = 16;
  int patience = kDefaultPatience;
  std::uint64_t seed = 42;
};

// The canonical acceptance fixture.
SimConfig ScenarioS1();

void Validate(const SimConfig& cfg);

// |t_ve - t_llm| / max(t_ve, t_llm) under the true convergence laws.
double NormalizedConvergenceGap(const SimConfig& cfg, double r_ve, double r_llm,
                                double d_f);

// Law-P value inflated by (1 + lambda * gap^p). Noiseless.
double TruePerplexity(const SimConfig& cfg, const RankPair& ranks, double d_f);
double TruePerplexity(const SimConfig& cfg, double r_ve, double r_llm,
                      double d_f);

struct SimRunOutput {
  TelemetryRun run;
  double true_final_perplexity = 0.0;
  double true_t_ve = 0.0;  // law values
  double true_t_llm = 0.0;
  double realized_t_ve = 0.0;  // after convergence noise
  double realized_t_llm = 0.0;
  // Last logged step: the run stops once both modules have stalled for
  // `patience` evaluations.
  std::int64_t steps_run = 0;
};

// Stream identifier for a run, derived from its ranks, dataset size and a
// caller tag so that distinct plans never share noise.
std::uint64_t DeriveRunSeed(const RankPair& ranks, std::int64_t d_f,
                            std::uint64_t tag = 0);

// Simulates one run on a dataset of d_f samples.
//
// After s steps the model has seen d(s) = min(s * batch, d_f) samples and the
// logged perplexity is TruePerplexity at d(s) times lognormal noise. Module
// i's progress metric is exp(-min(s, t_i) / tau_i) with tau_i = t_i / 4 and
// t_i the law value times lognormal convergence noise, so the patience
// detector fires at the first evaluation at or after t_i. Evaluations run
// every eval_interval steps until both detectors have fired. The output is a
// pure function of (cfg.seed, run_seed). Throws ConfigError when the horizon
// passes 2^31 steps.
SimRunOutput SimulateRun(const SimConfig& cfg, const RankPair& ranks,
                         std::int64_t d_f, std::uint64_t run_seed);

struct OracleRow {
  RankPair ranks;
  double true_perplexity = 0.0;
  double t_ve = 0.0;
  double t_llm = 0.0;
};

struct OracleResult {
  RankPair best;
  std::vector<OracleRow> table;
};

// Exhaustive noiseless evaluation; ties go to the smaller r_llm, then r_ve.
// Throws ArgumentError on an empty grid.
OracleResult OracleGrid(const SimConfig& cfg, std::span<const RankPair> grid,
                        std::int64_t d_f);

// All (r_ve, r_llm) pairs, r_llm-major.
std::vector<RankPair> CrossGrid(std::span<const int> ve_ranks,
                                std::span<const int> llm_ranks);

struct CalibrationPlan {
  std::vector<SimRunOutput> runs;
  // The anti-diagonal pairs are not part of a diagonal-only plan; they are
  // what separates alpha_m from alpha_l.
  bool anti_diagonal_augmented = true;

  std::vector<TelemetryRun> telemetry() const;
  std::vector<double> run_steps() const;
};

// Diagonal pairs (r, r) on D = checkpoints.front() * batch and anti-diagonal
// pairs (r_i, r_{n-1-i}) on D = checkpoints.back() * batch, one run each.
CalibrationPlan GenerateCalibrationPlan(const SimConfig& cfg,
                                        std::span<const int> rank_values,
                                        std::span<const std::int64_t> checkpoints);

}  // namespace mars

#endif  // MARS_SIMULATOR_HPP_
