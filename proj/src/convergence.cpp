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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <utility>

#include "mars/error.hpp"
#include "mars/telemetry.hpp"

namespace mars {

ConvergenceVerdict DetectConvergence(std::span<const SeriesPoint> series,
                                     int patience, double min_delta) {
  if (series.empty()) throw ArgumentError("convergence series is empty");
  if (patience < 1) throw ArgumentError("patience must be positive");
  if (!(min_delta >= 0.0)) throw ArgumentError("min_delta must be >= 0");

  std::size_t best = 0;
  int stale = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].value < series[best].value - min_delta) {
      best = i;
      stale = 0;
    } else if (++stale >= patience) {
      return {true, series[best].step, series[best].value};
    }
  }

  // Never stalled long enough: report the earliest global minimum.
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].value < series[argmin].value) argmin = i;
  }
  return {false, series[argmin].step, series[argmin].value};
}

namespace {

std::int64_t SaturatingProduct(std::int64_t a, std::int64_t b) {
  if (a != 0 && b > std::numeric_limits<std::int64_t>::max() / a) {
    return std::numeric_limits<std::int64_t>::max();
  }
  return a * b;
}

std::span<const SeriesPoint> TruncateAt(const Series& series,
                                        std::int64_t step) {
  const auto end = std::upper_bound(
      series.begin(), series.end(), step,
      [](std::int64_t s, const SeriesPoint& p) { return s < p.step; });
  return {series.data(), static_cast<std::size_t>(end - series.begin())};
}

}  // namespace

CalibrationDataset BuildCalibrationDataset(std::span<const TelemetryRun> runs,
                                           const CalibrationOptions& options) {
  if (!std::is_sorted(options.checkpoint_steps.begin(),
                      options.checkpoint_steps.end())) {
    throw ArgumentError("checkpoint steps must be sorted ascending");
  }
  for (const auto s : options.checkpoint_steps) {
    if (s <= 0) throw ArgumentError("checkpoint steps must be positive");
  }

  CalibrationDataset out;
  for (const auto& run : runs) {
    ValidateRun(run);
    out.provenance.push_back(run.run_id);

    // (module, d_eff) already observed for this run.
    std::set<std::pair<Module, std::int64_t>> seen;
    auto observe = [&](Module module, std::int64_t upto, std::int64_t d_eff) {
      auto& censored = module == Module::kVisionEncoder
                           ? out.diagnostics.censored_ve
                           : out.diagnostics.censored_llm;
      const auto prefix = TruncateAt(run.progress(module), upto);
      if (prefix.empty()) {
        ++censored;
        return;
      }
      const auto verdict =
          DetectConvergence(prefix, options.patience, options.min_delta);
      // A best value at step 0 means the module never moved; it carries no
      // convergence time.
      if (!verdict.converged || verdict.t_steps <= 0) {
        ++censored;
        return;
      }
      if (!seen.insert({module, d_eff}).second) return;
      auto& sink = module == Module::kVisionEncoder ? out.conv_obs_ve
                                                    : out.conv_obs_llm;
      const int rank = module == Module::kVisionEncoder ? run.ranks.r_ve
                                                        : run.ranks.r_llm;
      sink.push_back({rank, d_eff, static_cast<double>(verdict.t_steps)});
    };

    for (const auto s : options.checkpoint_steps) {
      const auto curve = TruncateAt(run.curve, s);
      if (curve.empty()) {
        ++out.diagnostics.skipped_checkpoints;
        continue;
      }
      const auto d_eff =
          std::min(SaturatingProduct(s, run.batch_size), run.dataset_size);
      out.perf_obs.push_back({run.ranks, d_eff, curve.back().value});
      observe(Module::kVisionEncoder, s, d_eff);
      observe(Module::kLlm, s, d_eff);
    }

    if (options.include_run_end) {
      for (const auto module : {Module::kVisionEncoder, Module::kLlm}) {
        const auto& series = run.progress(module);
        if (series.empty()) continue;
        const auto last = series.back().step;
        observe(module, last,
                std::min(SaturatingProduct(last, run.batch_size),
                         run.dataset_size));
      }
    }
  }
  return out;
}

}  // namespace mars
