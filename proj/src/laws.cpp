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

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/laws.hpp"

namespace mars {
namespace {

double Sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double Logit(double p) { return std::log(p) - std::log1p(-p); }

double Softplus(double e) {
  return e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
}

// Inverse of Softplus for y > 0.
double SoftplusInverse(double y) {
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double Squash(double u, double lo, double hi) { return lo + (hi - lo) * Sigmoid(u); }

// Inverse of Squash; values at or beyond a bound sit 1e-9 of the width inside.
double Unsquash(double x, double lo, double hi) {
  const double p = std::clamp((x - lo) / (hi - lo), 1e-9, 1.0 - 1e-9);
  return Logit(p);
}

// Underflow or overflow of the prediction; the line search backs off.
ObjectiveValue Unbounded(std::size_t n) {
  return {std::numeric_limits<double>::infinity(), std::vector<double>(n, 0.0)};
}

// Smallest representable E > 0 that the softplus can encode.
constexpr double kMinEncodedE = 1e-300;

double CheckFinite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericRangeError(fmt::format("{} is not finite", what));
  }
  return v;
}

}  // namespace

void Validate(const LawPCoefficients& c) {
  if (!(c.A > 0.0) || !(c.E >= 0.0) || !std::isfinite(c.A) ||
      !std::isfinite(c.E) || !std::isfinite(c.alpha_m) ||
      !std::isfinite(c.alpha_l) || !std::isfinite(c.beta)) {
    throw ValidationError("Law-P coefficients require finite values, A > 0 "
                          "and E >= 0");
  }
}

void Validate(const LawCCoefficients& c) {
  if (!(c.k > 0.0) || !(c.gamma < 0.0) || !(c.delta > 0.0) || !(c.E >= 0.0) ||
      !std::isfinite(c.k) || !std::isfinite(c.gamma) ||
      !std::isfinite(c.delta) || !std::isfinite(c.E)) {
    throw ValidationError(fmt::format(
        "Law-C ({}) coefficients require k > 0, gamma < 0, delta > 0, E >= 0",
        ModuleName(c.module)));
  }
}

double PredictLoss(const LawPCoefficients& c, double r_ve, double r_llm,
                   double d_f) {
  if (!(r_ve > 0.0) || !(r_llm > 0.0) || !(d_f > 0.0)) {
    throw ArgumentError("predict_loss needs positive ranks and dataset size");
  }
  const double denom = std::pow(r_ve, c.alpha_m) * std::pow(r_llm, c.alpha_l) *
                       std::pow(d_f, c.beta);
  return CheckFinite(c.A / denom + c.E, "predicted loss");
}

double PredictLoss(const LawPCoefficients& c, const RankPair& ranks,
                   double d_f) {
  return PredictLoss(c, static_cast<double>(ranks.r_ve),
                     static_cast<double>(ranks.r_llm), d_f);
}

double PredictConvergence(const LawCCoefficients& c, double rank, double d_f) {
  if (!(rank > 0.0) || !(d_f > 0.0)) {
    throw ArgumentError(
        "predict_convergence needs a positive rank and dataset size");
  }
  return CheckFinite(
      c.k * std::pow(rank, c.gamma) * std::pow(d_f, c.delta) + c.E,
      "predicted convergence time");
}

double Huber(double residual, double delta) {
  const double a = std::abs(residual);
  return a <= delta ? 0.5 * residual * residual : delta * (a - 0.5 * delta);
}

double HuberDerivative(double residual, double delta) {
  return std::clamp(residual, -delta, delta);
}

LawPCoefficients DecodeLawP(std::span<const double> p, const FitBounds& b) {
  if (p.size() != kLawPParams) throw ArgumentError("Law-P expects 5 parameters");
  return {std::exp(p[0]), Squash(p[1], b.exponent_lo, b.exponent_hi),
          Squash(p[2], b.exponent_lo, b.exponent_hi),
          Squash(p[3], b.exponent_lo, b.exponent_hi), Softplus(p[4])};
}

LawCCoefficients DecodeLawC(std::span<const double> p, Module module,
                            const FitBounds& b) {
  if (p.size() != kLawCParams) throw ArgumentError("Law-C expects 4 parameters");
  return {module, std::exp(p[0]), Squash(p[1], b.gamma_lo, b.gamma_hi),
          Squash(p[2], b.delta_lo, b.delta_hi), Softplus(p[3])};
}

std::vector<double> EncodeLawP(const LawPCoefficients& c, const FitBounds& b) {
  return {std::log(c.A), Unsquash(c.alpha_m, b.exponent_lo, b.exponent_hi),
          Unsquash(c.alpha_l, b.exponent_lo, b.exponent_hi),
          Unsquash(c.beta, b.exponent_lo, b.exponent_hi),
          SoftplusInverse(std::max(c.E, kMinEncodedE))};
}

std::vector<double> EncodeLawC(const LawCCoefficients& c, const FitBounds& b) {
  return {std::log(c.k), Unsquash(c.gamma, b.gamma_lo, b.gamma_hi),
          Unsquash(c.delta, b.delta_lo, b.delta_hi),
          SoftplusInverse(std::max(c.E, kMinEncodedE))};
}

// Both laws share the shape y = exp(s) + E with s linear in the coordinates:
//   s = a - sum_j x_j * log(feature_j)   (Law-P, x_j squashed exponents)
//   s = kappa + gamma log r + delta log D  (Law-C)
// so d log y / d s = exp(s) / y and d log y / d e = sigmoid(e) / y.
ObjectiveValue LawPObjective(std::span<const double> params,
                             std::span<const PerfObservation> data,
                             double huber_delta, const FitBounds& b) {
  if (data.empty()) throw ArgumentError("Law-P objective needs data");
  const auto c = DecodeLawP(params, b);
  const double width = b.exponent_hi - b.exponent_lo;
  const double jac[3] = {width * Sigmoid(params[1]) * (1.0 - Sigmoid(params[1])),
                         width * Sigmoid(params[2]) * (1.0 - Sigmoid(params[2])),
                         width * Sigmoid(params[3]) * (1.0 - Sigmoid(params[3]))};
  const double dE = Sigmoid(params[4]);

  ObjectiveValue out;
  out.gradient.assign(kLawPParams, 0.0);
  for (const auto& obs : data) {
    const double lr_ve = std::log(static_cast<double>(obs.ranks.r_ve));
    const double lr_llm = std::log(static_cast<double>(obs.ranks.r_llm));
    const double ld = std::log(static_cast<double>(obs.d_eff));
    const double power =
        std::exp(params[0] - c.alpha_m * lr_ve - c.alpha_l * lr_llm - c.beta * ld);
    const double pred = power + c.E;
    if (std::isnan(pred) || pred < 0.0) {
      throw InternalError("Law-P prediction is not positive");
    }
    if (pred == 0.0 || std::isinf(pred)) return Unbounded(kLawPParams);
    const double residual = std::log(pred) - std::log(obs.perplexity);
    out.value += Huber(residual, huber_delta);
    const double psi = HuberDerivative(residual, huber_delta);
    const double w = psi * power / pred;
    out.gradient[0] += w;
    out.gradient[1] -= w * lr_ve * jac[0];
    out.gradient[2] -= w * lr_llm * jac[1];
    out.gradient[3] -= w * ld * jac[2];
    out.gradient[4] += psi * dE / pred;
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  out.value *= inv_n;
  for (auto& g : out.gradient) g *= inv_n;
  return out;
}

ObjectiveValue LawCObjective(std::span<const double> params,
                             std::span<const ConvObservation> data,
                             double huber_delta, const FitBounds& b) {
  if (data.empty()) throw ArgumentError("Law-C objective needs data");
  const auto c = DecodeLawC(params, Module::kVisionEncoder, b);
  const double jg = (b.gamma_hi - b.gamma_lo) * Sigmoid(params[1]) *
                    (1.0 - Sigmoid(params[1]));
  const double jd = (b.delta_hi - b.delta_lo) * Sigmoid(params[2]) *
                    (1.0 - Sigmoid(params[2]));
  const double dE = Sigmoid(params[3]);

  ObjectiveValue out;
  out.gradient.assign(kLawCParams, 0.0);
  for (const auto& obs : data) {
    const double lr = std::log(static_cast<double>(obs.rank));
    const double ld = std::log(static_cast<double>(obs.d_eff));
    const double power = std::exp(params[0] + c.gamma * lr + c.delta * ld);
    const double pred = power + c.E;
    if (std::isnan(pred) || pred < 0.0) {
      throw InternalError("Law-C prediction is not positive");
    }
    if (pred == 0.0 || std::isinf(pred)) return Unbounded(kLawCParams);
    const double residual =
        std::log(pred) - std::log(obs.t_steps);
    out.value += Huber(residual, huber_delta);
    const double psi = HuberDerivative(residual, huber_delta);
    const double w = psi * power / pred;
    out.gradient[0] += w;
    out.gradient[1] += w * lr * jg;
    out.gradient[2] += w * ld * jd;
    out.gradient[3] += psi * dE / pred;
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  out.value *= inv_n;
  for (auto& g : out.gradient) g *= inv_n;
  return out;
}

}  // namespace mars
