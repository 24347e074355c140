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
#include <limits>
#include <set>

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/laws.hpp"
#include "mars/lbfgs.hpp"

namespace mars {
namespace {

// Exponent starts in squashed coordinates: the interval midpoint and one
// step either side.
constexpr double kExponentStarts[] = {-0.5, 0.0, 0.5};
// Irreducible-error starts as fractions of the smallest observation.
constexpr double kErrorFractions[] = {0.01, 0.5, 0.9};
// Scale starts around the least-squares intercept.
constexpr double kScaleOffsets[] = {-1.0, 0.0, 1.0};

template <typename T, typename Key>
std::size_t CountDistinct(std::span<const T> data, Key key) {
  std::set<decltype(key(data.front()))> values;
  for (const auto& obs : data) values.insert(key(obs));
  return values.size();
}

void RequireLawP(std::span<const PerfObservation> data) {
  if (data.size() < 6) {
    throw IdentifiabilityError(
        fmt::format("Law-P needs at least 6 observations, got {}", data.size()),
        "observations");
  }
  const std::pair<const char*, std::size_t> axes[] = {
      {"r_ve", CountDistinct(data, [](const auto& o) { return o.ranks.r_ve; })},
      {"r_llm", CountDistinct(data, [](const auto& o) { return o.ranks.r_llm; })},
      {"d_eff", CountDistinct(data, [](const auto& o) { return o.d_eff; })}};
  for (const auto& [axis, n] : axes) {
    if (n < 2) {
      throw IdentifiabilityError(
          fmt::format("Law-P needs >= 2 distinct {} values, got {}", axis, n),
          axis);
    }
  }
}

void RequireLawC(std::span<const ConvObservation> data, Module module) {
  const auto name = ModuleName(module);
  if (data.size() < 4) {
    throw IdentifiabilityError(
        fmt::format("Law-C ({}) needs at least 4 observations, got {}", name,
                    data.size()),
        "observations");
  }
  if (CountDistinct(data, [](const auto& o) { return o.rank; }) < 2) {
    throw IdentifiabilityError(
        fmt::format("Law-C ({}) needs >= 2 distinct ranks", name), "rank");
  }
  if (CountDistinct(data, [](const auto& o) { return o.d_eff; }) < 2) {
    throw IdentifiabilityError(
        fmt::format("Law-C ({}) needs >= 2 distinct dataset sizes", name),
        "d_eff");
  }
}

// The pieces that differ between the two laws.
struct LawAdapter {
  std::size_t n_params;
  std::size_t n_obs;
  // Objective over the full coordinate vector.
  std::function<ObjectiveValue(std::span<const double>)> objective;
  // log(prediction) - log(observation) for observation i.
  std::function<double(std::span<const double>, std::size_t)> residual;
  // Starting points.
  std::function<std::vector<std::vector<double>>()> starts;
};

struct StartOutcome {
  LbfgsResult result;
  std::vector<double> full;
};

struct Solved {
  std::vector<double> params;
  double objective = 0.0;
  int starts_tried = 0;
  int converged = 0;
  std::vector<double> objectives;
  std::vector<std::vector<double>> traces;
};

Solved Solve(const LawAdapter& law, const FitConfig& config,
             std::optional<std::size_t> frozen) {
  LbfgsOptions options;
  options.memory = config.lbfgs_memory;
  options.max_iterations = config.max_iterations;
  options.gradient_tolerance = config.gradient_tolerance;
  options.wolfe_c1 = config.wolfe_c1;
  options.wolfe_c2 = config.wolfe_c2;
  options.record_trace = config.record_traces;

  auto starts = law.starts();
  if (static_cast<int>(starts.size()) > config.max_starts) {
    starts.resize(static_cast<std::size_t>(config.max_starts));
  }

  // Optimizes over the free coordinates only; returns the full vector.
  auto run = [&](const std::vector<double>& start, const LbfgsOptions& opts) {
    std::vector<double> full = start;
    auto pack = [&](std::span<const double> x) {
      std::size_t j = 0;
      for (std::size_t i = 0; i < full.size(); ++i) {
        if (frozen && *frozen == i) continue;
        full[i] = x[j++];
      }
    };
    std::vector<double> x0;
    for (std::size_t i = 0; i < start.size(); ++i) {
      if (!(frozen && *frozen == i)) x0.push_back(start[i]);
    }
    const DifferentiableFunction f = [&](std::span<const double> x,
                                         std::span<double> grad) {
      pack(x);
      const auto value = law.objective(full);
      std::size_t j = 0;
      for (std::size_t i = 0; i < full.size(); ++i) {
        if (frozen && *frozen == i) continue;
        grad[j++] = value.gradient[i];
      }
      return value.value;
    };
    auto result = MinimizeLbfgs(f, std::move(x0), opts);
    pack(result.x);
    return StartOutcome{std::move(result), std::move(full)};
  };

  Solved out;
  bool have_best = false;
  for (const auto& start : starts) {
    auto [result, full] = run(start, options);
    ++out.starts_tried;
    out.objectives.push_back(std::isfinite(result.value)
                                 ? result.value
                                 : std::numeric_limits<double>::quiet_NaN());
    if (config.record_traces) out.traces.push_back(result.trace);
    if (!result.converged() || !std::isfinite(result.value)) continue;
    ++out.converged;
    const bool better =
        !have_best || result.value < out.objective ||
        (result.value == out.objective &&
         std::lexicographical_compare(full.begin(), full.end(),
                                      out.params.begin(), out.params.end()));
    if (better) {
      have_best = true;
      out.objective = result.value;
      out.params = full;
    }
  }
  if (!have_best) {
    throw FitFailure(fmt::format("none of {} starts converged", out.starts_tried));
  }
  if (config.polish) {
    // The absolute gradient test can stop inside a flat valley (E is weakly
    // determined when it is small next to the power term). Continue from the
    // winner until the line search stalls.
    auto polish_options = options;
    polish_options.gradient_tolerance = 0.0;
    polish_options.record_trace = false;
    auto [result, full] = run(out.params, polish_options);
    if (std::isfinite(result.value) && result.value < out.objective) {
      out.objective = result.value;
      out.params = std::move(full);
    }
  }
  return out;
}

double MeanAbsResidual(const LawAdapter& law, std::span<const double> params,
                       std::span<const std::size_t> indices) {
  double sum = 0.0;
  for (const auto i : indices) sum += std::abs(law.residual(params, i));
  return indices.empty() ? 0.0 : sum / static_cast<double>(indices.size());
}

double RSquaredLog(const LawAdapter& law, std::span<const double> params,
                   const std::vector<double>& log_obs) {
  double mean = 0.0;
  for (const double v : log_obs) mean += v;
  mean /= static_cast<double>(log_obs.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < log_obs.size(); ++i) {
    const double r = law.residual(params, i);
    ss_res += r * r;
    ss_tot += (log_obs[i] - mean) * (log_obs[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> ErrorLevels(double min_obs, const FitConfig& config) {
  if (config.fixed_E) return {*config.fixed_E};
  std::vector<double> out;
  for (const double f : kErrorFractions) out.push_back(f * min_obs);
  return out;
}

LawAdapter MakeLawP(std::span<const PerfObservation> data,
                    const FitConfig& config) {
  LawAdapter law;
  law.n_params = kLawPParams;
  law.n_obs = data.size();
  law.objective = [data, &config](std::span<const double> p) {
    return LawPObjective(p, data, config.huber_delta, config.bounds);
  };
  law.residual = [data, &config](std::span<const double> p, std::size_t i) {
    const auto c = DecodeLawP(p, config.bounds);
    return std::log(PredictLoss(c, data[i].ranks, static_cast<double>(data[i].d_eff))) -
           std::log(data[i].perplexity);
  };
  law.starts = [data, &config]() {
    double min_obs = std::numeric_limits<double>::infinity();
    for (const auto& o : data) min_obs = std::min(min_obs, o.perplexity);
    std::vector<std::vector<double>> starts;
    for (const double E : ErrorLevels(min_obs, config)) {
      for (const double um : kExponentStarts) {
        for (const double ul : kExponentStarts) {
          for (const double ub : kExponentStarts) {
            LawPCoefficients c;
            const auto& b = config.bounds;
            const auto probe = DecodeLawP(std::vector<double>{0.0, um, ul, ub, 0.0}, b);
            c.alpha_m = probe.alpha_m;
            c.alpha_l = probe.alpha_l;
            c.beta = probe.beta;
            c.E = E;
            double intercept = 0.0;
            for (const auto& o : data) {
              const double excess = std::max(o.perplexity - E, 1e-12 * o.perplexity);
              intercept += std::log(excess) +
                           c.alpha_m * std::log(static_cast<double>(o.ranks.r_ve)) +
                           c.alpha_l * std::log(static_cast<double>(o.ranks.r_llm)) +
                           c.beta * std::log(static_cast<double>(o.d_eff));
            }
            intercept /= static_cast<double>(data.size());
            for (const double off : kScaleOffsets) {
              c.A = std::exp(intercept + off);
              auto p = EncodeLawP(c, b);
              p[1] = um;
              p[2] = ul;
              p[3] = ub;
              starts.push_back(std::move(p));
            }
          }
        }
      }
    }
    return starts;
  };
  return law;
}

LawAdapter MakeLawC(std::span<const ConvObservation> data, Module module,
                    const FitConfig& config) {
  LawAdapter law;
  law.n_params = kLawCParams;
  law.n_obs = data.size();
  law.objective = [data, &config](std::span<const double> p) {
    return LawCObjective(p, data, config.huber_delta, config.bounds);
  };
  law.residual = [data, module, &config](std::span<const double> p,
                                         std::size_t i) {
    const auto c = DecodeLawC(p, module, config.bounds);
    return std::log(PredictConvergence(c, data[i].rank,
                                       static_cast<double>(data[i].d_eff))) -
           std::log(data[i].t_steps);
  };
  law.starts = [data, module, &config]() {
    double min_obs = std::numeric_limits<double>::infinity();
    for (const auto& o : data) {
      min_obs = std::min(min_obs, o.t_steps);
    }
    std::vector<std::vector<double>> starts;
    for (const double E : ErrorLevels(min_obs, config)) {
      for (const double ug : kExponentStarts) {
        for (const double ud : kExponentStarts) {
          const auto& b = config.bounds;
          auto c = DecodeLawC(std::vector<double>{0.0, ug, ud, 0.0}, module, b);
          c.E = E;
          double intercept = 0.0;
          for (const auto& o : data) {
            const double t = o.t_steps;
            intercept += std::log(std::max(t - E, 1e-12 * t)) -
                         c.gamma * std::log(static_cast<double>(o.rank)) -
                         c.delta * std::log(static_cast<double>(o.d_eff));
          }
          intercept /= static_cast<double>(data.size());
          for (const double off : kScaleOffsets) {
            c.k = std::exp(intercept + off);
            auto p = EncodeLawC(c, b);
            p[1] = ug;
            p[2] = ud;
            starts.push_back(std::move(p));
          }
        }
      }
    }
    return starts;
  };
  return law;
}

template <typename Coefficients, typename Obs, typename Require,
          typename Adapter, typename Decode>
FitReport<Coefficients> Fit(std::span<const Obs> data, const FitConfig& config,
                            std::size_t error_index, Require require,
                            Adapter make, Decode decode,
                            const std::vector<double>& log_obs) {
  Validate(config);
  require(data);
  const std::optional<std::size_t> frozen =
      config.fixed_E ? std::optional<std::size_t>(error_index) : std::nullopt;

  const auto law = make(data);
  auto solved = Solve(law, config, frozen);

  FitReport<Coefficients> report;
  report.coefficients = decode(solved.params);
  if (config.fixed_E) report.coefficients.E = *config.fixed_E;
  report.objective_value = solved.objective;
  report.starts_tried = solved.starts_tried;
  report.converged_starts = solved.converged;
  report.start_objectives = std::move(solved.objectives);
  report.traces = std::move(solved.traces);
  report.r_squared_log = RSquaredLog(law, solved.params, log_obs);

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  report.holdout_mae_log = MeanAbsResidual(law, solved.params, all);

  if (config.holdout_stride > 1) {
    std::vector<Obs> train;
    std::vector<std::size_t> held;
    const auto stride = static_cast<std::size_t>(config.holdout_stride);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i % stride == stride - 1) {
        held.push_back(i);
      } else {
        train.push_back(data[i]);
      }
    }
    bool usable = !held.empty();
    if (usable) {
      try {
        require(std::span<const Obs>(train));
      } catch (const IdentifiabilityError&) {
        usable = false;
      }
    }
    if (usable) {
      try {
        FitConfig inner = config;
        inner.record_traces = false;
        const auto train_law = make(std::span<const Obs>(train));
        const auto split = Solve(train_law, inner, frozen);
        report.holdout_mae_log = MeanAbsResidual(law, split.params, held);
        report.holdout_used = true;
      } catch (const FitFailure&) {
        // Keep the in-sample value.
      }
    }
  }
  return report;
}

}  // namespace

void Validate(const FitConfig& config) {
  const auto& b = config.bounds;
  if (!(config.huber_delta > 0.0) || !std::isfinite(config.huber_delta)) {
    throw ArgumentError("huber_delta must be positive");
  }
  if (!(b.exponent_lo < b.exponent_hi) || !(b.gamma_lo < b.gamma_hi) ||
      !(b.gamma_hi < 0.0) || !(b.delta_lo < b.delta_hi) || !(b.delta_lo > 0.0)) {
    throw ArgumentError("fit bounds are empty or violate the sign constraints");
  }
  if (config.max_iterations < 1 || config.max_starts < 1 ||
      config.lbfgs_memory < 1 || config.holdout_stride < 0) {
    throw ArgumentError("iteration, start, memory and holdout settings must be "
                        "positive");
  }
  if (!(config.gradient_tolerance > 0.0)) {
    throw ArgumentError("gradient_tolerance must be positive");
  }
  if (config.fixed_E && !(*config.fixed_E >= 0.0)) {
    throw ArgumentError("fixed_E must be >= 0");
  }
}

LawPFit FitLawP(std::span<const PerfObservation> data, const FitConfig& config) {
  std::vector<double> log_obs;
  for (const auto& o : data) log_obs.push_back(std::log(o.perplexity));
  return Fit<LawPCoefficients, PerfObservation>(
      data, config, kLawPParams - 1, RequireLawP,
      [&config](std::span<const PerfObservation> d) { return MakeLawP(d, config); },
      [&config](const std::vector<double>& p) { return DecodeLawP(p, config.bounds); },
      log_obs);
}

LawPFit FitLawP(const CalibrationDataset& data, const FitConfig& config) {
  return FitLawP(std::span<const PerfObservation>(data.perf_obs), config);
}

LawCFit FitLawC(std::span<const ConvObservation> data, Module module,
                const FitConfig& config) {
  std::vector<double> log_obs;
  for (const auto& o : data) log_obs.push_back(std::log(o.t_steps));
  return Fit<LawCCoefficients, ConvObservation>(
      data, config, kLawCParams - 1,
      [module](std::span<const ConvObservation> d) { RequireLawC(d, module); },
      [&config, module](std::span<const ConvObservation> d) {
        return MakeLawC(d, module, config);
      },
      [&config, module](const std::vector<double>& p) {
        return DecodeLawC(p, module, config.bounds);
      },
      log_obs);
}

LawCFit FitLawC(const CalibrationDataset& data, Module module,
                const FitConfig& config) {
  return FitLawC(std::span<const ConvObservation>(data.conv_obs(module)), module,
                 config);
}

}  // namespace mars
