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

#ifndef MARS_TELEMETRY_HPP_
#define MARS_TELEMETRY_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mars/types.hpp"

namespace mars {

struct SeriesPoint {
  std::int64_t step = 0;
  double value = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

using Series = std::vector<SeriesPoint>;

// One fine-tuning run: validation perplexity plus one progress metric per
// module (lower is better), all sampled at the same evaluation steps.
struct TelemetryRun {
  std::string run_id;
  RankPair ranks;
  std::int64_t dataset_size = 0;
  std::int64_t batch_size = 0;
  std::int64_t eval_interval = 0;
  Series curve;
  Series ve_progress;
  Series llm_progress;

  const Series& progress(Module module) const {
    return module == Module::kVisionEncoder ? ve_progress : llm_progress;
  }

  friend bool operator==(const TelemetryRun&, const TelemetryRun&) = default;
};

// Throws ValidationError when a run violates its invariants (non-positive
// sizes, empty curve, non-increasing steps, non-finite or non-positive values).
void ValidateRun(const TelemetryRun& run, int r_max = kDefaultMaxRank);

enum class TelemetryFormat { kJsonl, kCsv };

// Throws UsageError for anything other than "jsonl" or "csv".
TelemetryFormat ParseTelemetryFormat(std::string_view name);

// Runs are returned in order of first appearance, each series sorted by step.
// Malformed records raise ParseError with the 1-based line number; a repeated
// (run_id, step) is a ParseError; non-positive values are ValidationErrors.
std::vector<TelemetryRun> ParseTelemetry(std::istream& in,
                                         TelemetryFormat format);
std::vector<TelemetryRun> ParseTelemetryFile(const std::filesystem::path& path,
                                             TelemetryFormat format);

// One record per evaluation event. Requires the three series of each run to
// share their steps.
void WriteTelemetry(std::ostream& out, std::span<const TelemetryRun> runs,
                    TelemetryFormat format);

struct ConvergenceVerdict {
  bool converged = false;
  std::int64_t t_steps = 0;
  double best_value = 0.0;

  friend bool operator==(const ConvergenceVerdict&,
                         const ConvergenceVerdict&) = default;
};

inline constexpr int kDefaultPatience = 5;
inline constexpr int kInfinitePatience = std::numeric_limits<int>::max();

// Early stopping over evaluation events. The best value only moves on an
// improvement of more than `min_delta`; the series has converged once
// `patience` consecutive evaluations fail to improve on it. Equal values
// later in the series never displace an earlier best. When the series ends
// first, the verdict is not converged and points at the earliest global
// minimum.
ConvergenceVerdict DetectConvergence(std::span<const SeriesPoint> series,
                                     int patience = kDefaultPatience,
                                     double min_delta = 0.0);

struct PerfObservation {
  RankPair ranks;
  std::int64_t d_eff = 0;
  double perplexity = 0.0;

  friend bool operator==(const PerfObservation&,
                         const PerfObservation&) = default;
};

struct ConvObservation {
  int rank = 0;
  std::int64_t d_eff = 0;
  // Whole steps when detected from telemetry; law-generated data may carry
  // fractional values.
  double t_steps = 0.0;

  friend bool operator==(const ConvObservation&,
                         const ConvObservation&) = default;
};

struct CalibrationDiagnostics {
  int censored_ve = 0;
  int censored_llm = 0;
  int skipped_checkpoints = 0;

  friend bool operator==(const CalibrationDiagnostics&,
                         const CalibrationDiagnostics&) = default;
};

struct CalibrationDataset {
  std::vector<PerfObservation> perf_obs;
  std::vector<ConvObservation> conv_obs_ve;
  std::vector<ConvObservation> conv_obs_llm;
  std::vector<std::string> provenance;
  CalibrationDiagnostics diagnostics;

  const std::vector<ConvObservation>& conv_obs(Module module) const {
    return module == Module::kVisionEncoder ? conv_obs_ve : conv_obs_llm;
  }

  friend bool operator==(const CalibrationDataset&,
                         const CalibrationDataset&) = default;
};

struct CalibrationOptions {
  std::vector<std::int64_t> checkpoint_steps;
  int patience = kDefaultPatience;
  double min_delta = 0.0;
  // Also observe convergence on each run's complete progress series, at
  // d_eff = min(last_step * batch, dataset_size). Adds no perf_obs.
  bool include_run_end = true;
};

// Each checkpoint s maps to d_eff = min(s * batch_size, dataset_size). The
// perf observation takes the last evaluation at or before s. Convergence is
// detected on the progress series truncated at s; censored truncations are
// counted in the diagnostics and dropped. A checkpoint before a run's first
// evaluation is skipped and counted.
CalibrationDataset BuildCalibrationDataset(std::span<const TelemetryRun> runs,
                                           const CalibrationOptions& options);

}  // namespace mars

#endif  // MARS_TELEMETRY_HPP_
