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

#include "mars/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mars/error.hpp"

namespace mars {
namespace {

constexpr std::uint64_t kNaiveTag = 3;

bool SameLaw(const LawCCoefficients& a, const LawCCoefficients& b) {
  return a.k == b.k && a.gamma == b.gamma && a.delta == b.delta && a.E == b.E;
}

template <typename F>
auto Staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const IdentifiabilityError& e) {
    throw IdentifiabilityError(fmt::format("{}: {}", stage, e.what()), e.axis());
  } catch (const FitFailure& e) {
    throw FitFailure(fmt::format("{}: {}", stage, e.what()));
  } catch (const NumericRangeError& e) {
    throw NumericRangeError(fmt::format("{}: {}", stage, e.what()));
  }
}

}  // namespace

void Validate(const SearchConfig& config) {
  if (config.r_min < 1 || config.r_max < config.r_min) {
    throw ArgumentError("need 1 <= r_min <= r_max");
  }
  if (config.d_target < 1) throw ArgumentError("d_target must be positive");
  if (config.r_options.empty()) throw ArgumentError("r_options is empty");
  for (std::size_t i = 0; i < config.r_options.size(); ++i) {
    const int r = config.r_options[i];
    if (r < config.r_min || r > config.r_max) {
      throw ArgumentError(fmt::format("r_options value {} outside [{}, {}]", r,
                                      config.r_min, config.r_max));
    }
    if (i > 0 && r <= config.r_options[i - 1]) {
      throw ArgumentError("r_options must be strictly increasing");
    }
  }
}

std::optional<double> BalancedVeRank(const LawCCoefficients& c_ve,
                                     const LawCCoefficients& c_llm, int r_llm,
                                     double d_target) {
  if (r_llm < 1 || !(d_target > 0.0)) {
    throw ArgumentError("balanced rank needs r_llm >= 1 and d_target > 0");
  }
  // Identical laws balance at the identity.
  if (SameLaw(c_ve, c_llm)) return static_cast<double>(r_llm);

  const double numerator =
      c_llm.k * std::pow(static_cast<double>(r_llm), c_llm.gamma) *
          std::pow(d_target, c_llm.delta) +
      c_llm.E - c_ve.E;
  if (!std::isfinite(numerator)) {
    throw NumericRangeError("balance numerator is not finite");
  }
  if (numerator <= 0.0) return std::nullopt;
  const double denominator = c_ve.k * std::pow(d_target, c_ve.delta);
  const double rank = std::pow(numerator / denominator, 1.0 / c_ve.gamma);
  if (!std::isfinite(denominator) || !std::isfinite(rank) || !(rank > 0.0)) {
    throw NumericRangeError("balanced VE rank is not finite");
  }
  return rank;
}

RoundedRank RoundRank(double continuous, int r_min, int r_max) {
  if (std::isnan(continuous)) throw NumericRangeError("rank is NaN");
  if (continuous >= static_cast<double>(r_max) + 0.5) return {r_max, true};
  if (continuous < static_cast<double>(r_min) - 0.5) return {r_min, true};
  const int r = static_cast<int>(std::floor(continuous + 0.5));
  if (r < r_min) return {r_min, true};
  if (r > r_max) return {r_max, true};
  return {r, false};
}

std::vector<Candidate> GenerateCandidates(const LawCCoefficients& c_ve,
                                          const LawCCoefficients& c_llm,
                                          const SearchConfig& config) {
  Validate(config);
  Validate(c_ve);
  Validate(c_llm);
  const auto d = static_cast<double>(config.d_target);
  std::vector<Candidate> out;
  out.reserve(config.r_options.size());
  for (const int r_llm : config.r_options) {
    try {
      Candidate c;
      c.r_ve_continuous = BalancedVeRank(c_ve, c_llm, r_llm, d);
      if (c.r_ve_continuous) {
        const auto rounded = RoundRank(*c.r_ve_continuous, config.r_min, config.r_max);
        c.ranks = {rounded.rank, r_llm};
        c.clamped = rounded.clamped;
      } else {
        c.ranks = {r_llm, r_llm};
        c.fallback_used = true;
      }
      c.predicted_t_ve = PredictConvergence(c_ve, c.ranks.r_ve, d);
      c.predicted_t_llm = PredictConvergence(c_llm, r_llm, d);
      out.push_back(c);
    } catch (const NumericRangeError& e) {
      throw NumericRangeError(fmt::format("r_llm={}: {}", r_llm, e.what()));
    }
  }
  return out;
}

std::size_t ArgminCandidate(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw ArgumentError("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    const auto key_a = std::make_tuple(a.predicted_loss, a.ranks.r_llm, a.ranks.r_ve);
    const auto key_b = std::make_tuple(b.predicted_loss, b.ranks.r_llm, b.ranks.r_ve);
    if (key_a < key_b) best = i;
  }
  return best;
}

SearchResult SelectBest(std::vector<Candidate> candidates,
                        const LawPCoefficients& c_p, double d_target) {
  if (candidates.empty()) throw ArgumentError("no candidates to select from");
  Validate(c_p);
  std::size_t fallbacks = 0;
  for (auto& c : candidates) {
    c.predicted_loss = PredictLoss(c_p, c.ranks, d_target);
    if (c.fallback_used) ++fallbacks;
  }
  SearchResult result;
  const auto best = ArgminCandidate(candidates);
  result.chosen = candidates[best].ranks;
  result.chosen_predicted_loss = candidates[best].predicted_loss;
  result.fallback_rate =
      static_cast<double>(fallbacks) / static_cast<double>(candidates.size());
  result.d_target = static_cast<std::int64_t>(d_target);
  result.candidates = std::move(candidates);
  return result;
}

MarsOutcome MarsSearch(const CalibrationDataset& dataset,
                       const SearchConfig& config, const FitConfig& fit_config) {
  Validate(config);
  MarsOutcome out;
  out.law_c_ve = Staged("law_c_ve", [&] {
    return FitLawC(dataset, Module::kVisionEncoder, fit_config);
  });
  out.law_c_llm =
      Staged("law_c_llm", [&] { return FitLawC(dataset, Module::kLlm, fit_config); });
  out.law_p = Staged("law_p", [&] { return FitLawP(dataset, fit_config); });
  out.result = Staged("search", [&] {
    auto candidates = GenerateCandidates(out.law_c_ve.coefficients,
                                         out.law_c_llm.coefficients, config);
    return SelectBest(std::move(candidates), out.law_p.coefficients,
                      static_cast<double>(config.d_target));
  });
  return out;
}

NaiveOutcome NaiveSearch(const SimConfig& sim, std::span<const int> r_options,
                         std::int64_t d_target) {
  if (r_options.empty()) throw ArgumentError("naive search grid is empty");
  NaiveOutcome out;
  for (const auto& ranks : CrossGrid(r_options, r_options)) {
    auto run = SimulateRun(sim, ranks, d_target,
                           DeriveRunSeed(ranks, d_target, kNaiveTag));
    out.total_steps += static_cast<double>(run.steps_run);
    ++out.runs;
    const bool better =
        out.outputs.empty() ||
        std::make_tuple(run.true_final_perplexity, ranks.r_llm, ranks.r_ve) <
            std::make_tuple(TruePerplexity(sim, out.best, static_cast<double>(d_target)),
                            out.best.r_llm, out.best.r_ve);
    if (better) out.best = ranks;
    out.outputs.push_back(std::move(run));
  }
  return out;
}

CostReport MakeCostReport(double naive_steps, int naive_runs,
                          std::span<const double> calibration_run_steps,
                          double final_run_steps, bool shared_backbone,
                          int parallel_heads) {
  if (!(naive_steps > 0.0) || naive_runs < 1 || !(final_run_steps > 0.0)) {
    throw ArgumentError("naive and final step counts must be positive");
  }
  if (calibration_run_steps.empty()) {
    throw ArgumentError("calibration plan has no runs");
  }
  if (parallel_heads < 1) throw ArgumentError("parallel_heads must be >= 1");
  double calibration = 0.0;
  for (const double s : calibration_run_steps) {
    if (!(s > 0.0)) throw ArgumentError("calibration run steps must be positive");
    calibration += s;
  }
  CostReport report;
  report.naive_runs = naive_runs;
  report.naive_steps = naive_steps;
  report.shared_backbone_mode = shared_backbone;
  report.parallel_heads = shared_backbone ? parallel_heads : 1;
  report.mars_calibration_steps =
      shared_backbone ? calibration / parallel_heads : calibration;
  report.mars_final_steps = final_run_steps;
  const double denominator = report.mars_calibration_steps + final_run_steps;
  if (!(denominator > 0.0)) throw ArgumentError("zero MARS step count");
  report.speedup = naive_steps / denominator;
  return report;
}

}  // namespace mars
