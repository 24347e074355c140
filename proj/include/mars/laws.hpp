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

#ifndef MARS_LAWS_HPP_
#define MARS_LAWS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mars/telemetry.hpp"
#include "mars/types.hpp"

namespace mars {

// Performance law: L(r_ve, r_llm, D) = A / (r_ve^alpha_m r_llm^alpha_l D^beta) + E.
struct LawPCoefficients {
  double A = 1.0;
  double alpha_m = 0.0;
  double alpha_l = 0.0;
  double beta = 0.0;
  double E = 0.0;

  friend bool operator==(const LawPCoefficients&,
                         const LawPCoefficients&) = default;
};

// Per-module convergence law: t(r, D) = k r^gamma D^delta + E, steps.
struct LawCCoefficients {
  Module module = Module::kVisionEncoder;
  double k = 1.0;
  double gamma = -1.0;
  double delta = 1.0;
  double E = 0.0;

  friend bool operator==(const LawCCoefficients&,
                         const LawCCoefficients&) = default;
};

// Throw ValidationError on a violated sign constraint.
void Validate(const LawPCoefficients& c);
void Validate(const LawCCoefficients& c);

// Both throw NumericRangeError when the result is not finite.
double PredictLoss(const LawPCoefficients& c, const RankPair& ranks, double d_f);
double PredictLoss(const LawPCoefficients& c, double r_ve, double r_llm,
                   double d_f);
double PredictConvergence(const LawCCoefficients& c, double rank, double d_f);

double Huber(double residual, double delta);
// d Huber / d residual.
double HuberDerivative(double residual, double delta);

// Intervals the fitted exponents are squashed onto.
struct FitBounds {
  double exponent_lo = -5.0;  // alpha_m, alpha_l, beta
  double exponent_hi = 5.0;
  double gamma_lo = -5.0;
  double gamma_hi = -1e-3;
  double delta_lo = 1e-3;
  double delta_hi = 5.0;
};

// Unconstrained coordinates used by the optimizer:
//   Law-P: [a, u_alpha_m, u_alpha_l, u_beta, e]
//   Law-C: [kappa, u_gamma, u_delta, e]
// with A = exp(a), k = exp(kappa), E = softplus(e) and each exponent
// lo + (hi - lo) * sigmoid(u).
inline constexpr std::size_t kLawPParams = 5;
inline constexpr std::size_t kLawCParams = 4;

LawPCoefficients DecodeLawP(std::span<const double> params,
                            const FitBounds& bounds);
LawCCoefficients DecodeLawC(std::span<const double> params, Module module,
                            const FitBounds& bounds);
// Inverse maps. Values on or outside a bound are nudged just inside it.
std::vector<double> EncodeLawP(const LawPCoefficients& c,
                               const FitBounds& bounds);
std::vector<double> EncodeLawC(const LawCCoefficients& c,
                               const FitBounds& bounds);

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> gradient;
};

// Mean Huber loss of log(prediction) - log(observation) and its exact
// gradient in the unconstrained coordinates.
ObjectiveValue LawPObjective(std::span<const double> params,
                             std::span<const PerfObservation> data,
                             double huber_delta, const FitBounds& bounds);
ObjectiveValue LawCObjective(std::span<const double> params,
                             std::span<const ConvObservation> data,
                             double huber_delta, const FitBounds& bounds);

struct FitConfig {
  double huber_delta = 1e-3;
  FitBounds bounds;
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  int lbfgs_memory = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_starts = 243;
  // Every `holdout_stride`-th observation is held out for the diagnostic fit
  // (stride 5 = 20%). 0 disables the holdout fit.
  int holdout_stride = 5;
  // Pins the irreducible error instead of fitting it.
  std::optional<double> fixed_E;
  bool record_traces = false;
  // Refine the winning start until the line search stalls.
  bool polish = true;
};

// Throws ArgumentError for a non-positive delta, empty bounds, and so on.
void Validate(const FitConfig& config);

template <typename Coefficients>
struct FitReport {
  Coefficients coefficients;
  double objective_value = 0.0;
  int starts_tried = 0;
  int converged_starts = 0;
  // Mean |log residual| on held-out observations of a fit that did not see
  // them; falls back to the in-sample value when `holdout_used` is false.
  double holdout_mae_log = 0.0;
  bool holdout_used = false;
  double r_squared_log = 0.0;
  // Final objective of every start, in start order (NaN when non-finite).
  std::vector<double> start_objectives;
  // Per-start objective after every accepted iteration (record_traces only).
  std::vector<std::vector<double>> traces;
};

using LawPFit = FitReport<LawPCoefficients>;
using LawCFit = FitReport<LawCCoefficients>;

// Multi-start L-BFGS minimization of the Huber objective.
//
// Law-P needs >= 6 observations with >= 2 distinct values of each of r_ve,
// r_llm and d_eff; Law-C needs >= 4 observations spanning >= 2 ranks and
// >= 2 dataset sizes. Violations raise IdentifiabilityError naming the
// axis. FitFailure is raised when no start converges.
LawPFit FitLawP(std::span<const PerfObservation> data, const FitConfig& config);
LawPFit FitLawP(const CalibrationDataset& data, const FitConfig& config);
LawCFit FitLawC(std::span<const ConvObservation> data, Module module,
                const FitConfig& config);
LawCFit FitLawC(const CalibrationDataset& data, Module module,
                const FitConfig& config);

}  // namespace mars

#endif  // MARS_LAWS_HPP_
