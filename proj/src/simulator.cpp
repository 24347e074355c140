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

#include "mars/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/philox.hpp"

namespace mars {
namespace {

constexpr std::uint64_t kConvergenceStream = 0xC0;
constexpr std::uint64_t kPerplexityStream = 0xB1;
constexpr std::uint64_t kDiagonalTag = 1;
constexpr std::uint64_t kAntiDiagonalTag = 2;
constexpr std::int64_t kMaxHorizon = std::int64_t{1} << 31;

// Orders pairs by (perplexity, r_llm, r_ve).
bool Better(double value, const RankPair& ranks, double best_value,
            const RankPair& best) {
  if (value != best_value) return value < best_value;
  if (ranks.r_llm != best.r_llm) return ranks.r_llm < best.r_llm;
  return ranks.r_ve < best.r_ve;
}

}  // namespace

SimConfig ScenarioS1() {
  SimConfig cfg;
  cfg.true_law_p = {12.0, 0.08, 0.22, 0.28, 1.6};
  cfg.true_law_c_ve = {Module::kVisionEncoder, 900.0, -0.55, 0.5, 60.0};
  cfg.true_law_c_llm = {Module::kLlm, 2600.0, -0.35, 0.55, 140.0};
  cfg.gap_penalty_lambda = 0.3;
  cfg.gap_penalty_power = 1.0;
  cfg.noise_sigma_log = 0.02;
  cfg.conv_noise_sigma_log = 0.02;
  cfg.batch_size = 8;
  cfg.eval_interval = 16;
  cfg.patience = kDefaultPatience;
  cfg.seed = 42;
  return cfg;
}

void Validate(const SimConfig& cfg) {
  Validate(cfg.true_law_p);
  Validate(cfg.true_law_c_ve);
  Validate(cfg.true_law_c_llm);
  if (!(cfg.gap_penalty_lambda >= 0.0) || !(cfg.gap_penalty_power > 0.0) ||
      !(cfg.noise_sigma_log >= 0.0) || !(cfg.conv_noise_sigma_log >= 0.0)) {
    throw ConfigError("penalty and noise parameters must be non-negative "
                      "(penalty power positive)");
  }
  if (cfg.batch_size < 1 || cfg.eval_interval < 1 || cfg.patience < 1) {
    throw ConfigError("batch_size, eval_interval and patience must be positive");
  }
}

double NormalizedConvergenceGap(const SimConfig& cfg, double r_ve, double r_llm,
                                double d_f) {
  const double t_ve = PredictConvergence(cfg.true_law_c_ve, r_ve, d_f);
  const double t_llm = PredictConvergence(cfg.true_law_c_llm, r_llm, d_f);
  return std::abs(t_ve - t_llm) / std::max(t_ve, t_llm);
}

double TruePerplexity(const SimConfig& cfg, double r_ve, double r_llm,
                      double d_f) {
  const double base = PredictLoss(cfg.true_law_p, r_ve, r_llm, d_f);
  const double gap = NormalizedConvergenceGap(cfg, r_ve, r_llm, d_f);
  return base * (1.0 + cfg.gap_penalty_lambda *
                           std::pow(gap, cfg.gap_penalty_power));
}

double TruePerplexity(const SimConfig& cfg, const RankPair& ranks, double d_f) {
  return TruePerplexity(cfg, static_cast<double>(ranks.r_ve),
                        static_cast<double>(ranks.r_llm), d_f);
}

std::uint64_t DeriveRunSeed(const RankPair& ranks, std::int64_t d_f,
                            std::uint64_t tag) {
  std::uint64_t h = MixBits(tag);
  h = MixBits(h ^ static_cast<std::uint64_t>(ranks.r_ve));
  h = MixBits(h ^ static_cast<std::uint64_t>(ranks.r_llm));
  return MixBits(h ^ static_cast<std::uint64_t>(d_f));
}

SimRunOutput SimulateRun(const SimConfig& cfg, const RankPair& ranks,
                         std::int64_t d_f, std::uint64_t run_seed) {
  Validate(cfg);
  ValidateRankPair(ranks);
  if (d_f < 1) throw ConfigError("dataset size must be positive");

  const CounterRng rng(cfg.seed);
  const auto conv_stream = MixBits(run_seed ^ kConvergenceStream);
  const auto perp_stream = MixBits(run_seed ^ kPerplexityStream);
  const auto d = static_cast<double>(d_f);

  SimRunOutput out;
  out.true_t_ve = PredictConvergence(cfg.true_law_c_ve, ranks.r_ve, d);
  out.true_t_llm = PredictConvergence(cfg.true_law_c_llm, ranks.r_llm, d);
  out.realized_t_ve =
      out.true_t_ve * std::exp(cfg.conv_noise_sigma_log * rng.Normal(conv_stream, 0));
  out.realized_t_llm =
      out.true_t_llm * std::exp(cfg.conv_noise_sigma_log * rng.Normal(conv_stream, 1));
  out.true_final_perplexity = TruePerplexity(cfg, ranks, d);

  const double interval = static_cast<double>(cfg.eval_interval);
  // First evaluation at or after each module's convergence step.
  const double last_best =
      std::ceil(std::max(out.realized_t_ve, out.realized_t_llm) / interval) *
      interval;
  const double horizon =
      last_best + static_cast<double>(cfg.patience) * interval;
  if (!(horizon <= static_cast<double>(kMaxHorizon))) {
    throw ConfigError(fmt::format(
        "simulated horizon for {} at D={} exceeds 2^31 steps", ToString(ranks),
        d_f));
  }
  out.steps_run = static_cast<std::int64_t>(horizon);

  auto& run = out.run;
  run.run_id = fmt::format("r{}-{}-d{}", ranks.r_ve, ranks.r_llm, d_f);
  run.ranks = ranks;
  run.dataset_size = d_f;
  run.batch_size = cfg.batch_size;
  run.eval_interval = cfg.eval_interval;
  const auto evaluations = out.steps_run / cfg.eval_interval;
  run.curve.reserve(static_cast<std::size_t>(evaluations));
  run.ve_progress.reserve(static_cast<std::size_t>(evaluations));
  run.llm_progress.reserve(static_cast<std::size_t>(evaluations));

  auto progress = [](double step, double t) {
    // tau = t / 4; flat once the module has converged.
    return std::exp(-4.0 * std::min(step, t) / t);
  };
  for (std::int64_t i = 1; i <= evaluations; ++i) {
    const std::int64_t step = i * cfg.eval_interval;
    const auto seen = static_cast<double>(
        std::min(static_cast<double>(step) * static_cast<double>(cfg.batch_size), d));
    const double clean = TruePerplexity(cfg, ranks, seen);
    const double noise =
        cfg.noise_sigma_log == 0.0
            ? 1.0
            : std::exp(cfg.noise_sigma_log *
                       rng.Normal(perp_stream, static_cast<std::uint64_t>(step)));
    const auto s = static_cast<double>(step);
    run.curve.push_back({step, clean * noise});
    run.ve_progress.push_back({step, progress(s, out.realized_t_ve)});
    run.llm_progress.push_back({step, progress(s, out.realized_t_llm)});
  }
  return out;
}

std::vector<RankPair> CrossGrid(std::span<const int> ve_ranks,
                                std::span<const int> llm_ranks) {
  std::vector<RankPair> grid;
  for (const int r_llm : llm_ranks) {
    for (const int r_ve : ve_ranks) grid.push_back({r_ve, r_llm});
  }
  return grid;
}

OracleResult OracleGrid(const SimConfig& cfg, std::span<const RankPair> grid,
                        std::int64_t d_f) {
  if (grid.empty()) throw ArgumentError("oracle grid is empty");
  Validate(cfg);
  OracleResult out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ranks : grid) {
    ValidateRankPair(ranks);
    const auto d = static_cast<double>(d_f);
    OracleRow row{ranks, TruePerplexity(cfg, ranks, d),
                  PredictConvergence(cfg.true_law_c_ve, ranks.r_ve, d),
                  PredictConvergence(cfg.true_law_c_llm, ranks.r_llm, d)};
    if (out.table.empty() || Better(row.true_perplexity, ranks, best, out.best)) {
      best = row.true_perplexity;
      out.best = ranks;
    }
    out.table.push_back(row);
  }
  return out;
}

std::vector<TelemetryRun> CalibrationPlan::telemetry() const {
  std::vector<TelemetryRun> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.run);
  return out;
}

std::vector<double> CalibrationPlan::run_steps() const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(static_cast<double>(r.steps_run));
  return out;
}

CalibrationPlan GenerateCalibrationPlan(
    const SimConfig& cfg, std::span<const int> rank_values,
    std::span<const std::int64_t> checkpoints) {
  if (rank_values.empty()) throw ArgumentError("no representative ranks");
  if (checkpoints.empty()) throw ArgumentError("no calibration checkpoints");
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()) ||
      checkpoints.front() < 1) {
    throw ArgumentError("checkpoints must be positive and ascending");
  }
  const std::int64_t d_diag = checkpoints.front() * cfg.batch_size;
  const std::int64_t d_anti = checkpoints.back() * cfg.batch_size;

  CalibrationPlan plan;
  const std::size_t n = rank_values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const RankPair ranks{rank_values[i], rank_values[i]};
    auto run = SimulateRun(cfg, ranks, d_diag,
                           DeriveRunSeed(ranks, d_diag, kDiagonalTag));
    run.run.run_id = "diag-" + run.run.run_id;
    plan.runs.push_back(std::move(run));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const RankPair ranks{rank_values[i], rank_values[n - 1 - i]};
    auto run = SimulateRun(cfg, ranks, d_anti,
                           DeriveRunSeed(ranks, d_anti, kAntiDiagonalTag));
    run.run.run_id = "anti-" + run.run.run_id;
    plan.runs.push_back(std::move(run));
  }
  return plan;
}

}  // namespace mars
